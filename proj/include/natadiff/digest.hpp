#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>

#include "natadiff/common.hpp"

namespace natadiff {

// Incremental SHA-256.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void add(const void* data, std::size_t size);
  void add(std::string_view s) { add(s.data(), s.size()); }
  void add(const Vec& v) { add(v.data(), sizeof(double) * static_cast<std::size_t>(v.size())); }
  void add(long long n) { add(&n, sizeof n); }
  std::string hex();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string sha256_hex(std::string_view data);

}  // namespace natadiff
