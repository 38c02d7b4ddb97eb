#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "dpmkv/common.hpp"

namespace dpmkv {

// Linearizable create/delete service for key records. Sits off the measured
// data path. The optional hook runs before each mutation, outside the lock,
// so an exhaustive schedule can interleave registry operations.
template <class Rec>
class Registry {
 public:
  using Hook = std::function<void(TaskCtx&)>;

  void set_hook(Hook h) { hook_ = std::move(h); }

  std::shared_ptr<Rec> create(TaskCtx& ctx, const std::string& key, Rec rec) {
    if (hook_) hook_(ctx);
    std::lock_guard lk(mu_);
    auto [it, inserted] =
        map_.try_emplace(key, std::make_shared<Rec>(std::move(rec)));
    if (!inserted) raise(Err::KeyExists, "key exists: " + key);
    return it->second;
  }

  std::shared_ptr<Rec> find(const std::string& key) const {
    std::lock_guard lk(mu_);
    auto it = map_.find(key);
    return it == map_.end() ? nullptr : it->second;
  }

  std::shared_ptr<Rec> require(const std::string& key) const {
    auto rec = find(key);
    if (!rec) raise(Err::KeyNotFound, "no such key: " + key);
    return rec;
  }

  std::shared_ptr<Rec> erase(TaskCtx& ctx, const std::string& key) {
    if (hook_) hook_(ctx);
    std::lock_guard lk(mu_);
    auto it = map_.find(key);
    if (it == map_.end()) raise(Err::KeyNotFound, "no such key: " + key);
    auto rec = it->second;
    map_.erase(it);
    return rec;
  }

  size_t size() const {
    std::lock_guard lk(mu_);
    return map_.size();
  }

  template <class Fn>
  void for_each(Fn&& fn) const {
    std::lock_guard lk(mu_);
    for (const auto& [k, rec] : map_) fn(k, *rec);
  }

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Rec>> map_;
  Hook hook_;
};

}  // namespace dpmkv
