#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "ftsim/errors.hpp"

namespace ftsim {

/// Length-prefixed little-endian byte stream used for snapshot payloads.
/// The byte count of an encoded snapshot is what the cost model charges, so
/// encoding must be deterministic: fixed field order, fixed-width scalars.
class ByteWriter {
 public:
  void u32(std::uint32_t v) { raw(&v, sizeof(v)); }
  void u64(std::uint64_t v) { raw(&v, sizeof(v)); }
  void i64(std::int64_t v) { raw(&v, sizeof(v)); }
  void f64(double v) { raw(&v, sizeof(v)); }

  void f64_array(const std::vector<double>& v) {
    u64(v.size());
    if (!v.empty()) raw(v.data(), v.size() * sizeof(double));
  }
  void i64_array(const std::vector<std::int64_t>& v) {
    u64(v.size());
    if (!v.empty()) raw(v.data(), v.size() * sizeof(std::int64_t));
  }
  void blob(const std::vector<std::uint8_t>& v) {
    u64(v.size());
    if (!v.empty()) raw(v.data(), v.size());
  }

  std::vector<std::uint8_t> take() { return std::move(buf_); }
  std::size_t size() const { return buf_.size(); }

 private:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

  std::uint32_t u32() { return scalar<std::uint32_t>(); }
  std::uint64_t u64() { return scalar<std::uint64_t>(); }
  std::int64_t i64() { return scalar<std::int64_t>(); }
  double f64() { return scalar<double>(); }

  std::vector<double> f64_array() { return array<double>(); }
  std::vector<std::int64_t> i64_array() { return array<std::int64_t>(); }
  std::vector<std::uint8_t> blob() { return array<std::uint8_t>(); }

  /// Call after the last field: trailing bytes mean a layout mismatch.
  void done() const {
    if (pos_ != buf_.size()) throw SimInvariantError("byte stream has trailing bytes");
  }

 private:
  template <class T>
  T scalar() {
    if (pos_ + sizeof(T) > buf_.size()) throw SimInvariantError("byte stream truncated");
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  template <class T>
  std::vector<T> array() {
    std::uint64_t n = u64();
    if (pos_ + n * sizeof(T) > buf_.size()) throw SimInvariantError("byte stream truncated");
    std::vector<T> v(n);
    if (n) std::memcpy(v.data(), buf_.data() + pos_, n * sizeof(T));
    pos_ += n * sizeof(T);
    return v;
  }

  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

}  // namespace ftsim
