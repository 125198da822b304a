#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fdivmin/errors.hpp"
#include "fdivmin/tensor.hpp"

namespace fdivmin {

// Which side of the objective a parameter belongs to. The interleaved
// update loop freezes one role while stepping the other.
enum class Role { theta, phi };

inline const char* role_name(Role r) {
  return r == Role::theta ? "theta" : "phi";
}

using GradientMap = std::map<std::string, Tensor>;

// Named tensors with stable iteration order and a role tag per entry.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Role role;
  };

  void add(const std::string& name, Tensor value, Role role) {
    if (index_.count(name))
      throw ContractViolation("ParameterSet: duplicate name " + name);
    index_[name] = entries_.size();
    entries_.push_back({name, std::move(value), role});
  }

  bool contains(const std::string& name) const { return index_.count(name); }

  Tensor& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end())
      throw ContractViolation("ParameterSet: unknown name " + name);
    return entries_[it->second].value;
  }

  const Tensor& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
      throw ContractViolation("ParameterSet: unknown name " + name);
    return entries_[it->second].value;
  }

  Role role_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
      throw ContractViolation("ParameterSet: unknown name " + name);
    return entries_[it->second].role;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::vector<std::string> names(std::optional<Role> role = {}) const {
    std::vector<std::string> out;
    for (const auto& e : entries_)
      if (!role || e.role == *role) out.push_back(e.name);
    return out;
  }

  std::size_t coordinate_count(std::optional<Role> role = {}) const {
    std::size_t n = 0;
    for (const auto& e : entries_)
      if (!role || e.role == *role) n += e.value.size();
    return n;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace fdivmin
