#pragma once

#include "dgm/core.hpp"

#include <bit>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

namespace dgm::bin {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

class Writer {
public:
  template <typename T>
  void put(const T &v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto *p = reinterpret_cast<const char *>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_vec3(const Vec3 &v) {
    for (int i = 0; i < 3; ++i) put(v[i]);
  }
  void put_bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void put_string(std::string_view s) {
    put(static_cast<std::uint64_t>(s.size()));
    put_bytes(s);
  }
  const std::string &data() const { return buf_; }
  std::string &data() { return buf_; }

private:
  std::string buf_;
};

class Reader {
public:
  Reader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

  template <typename T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  Vec3 get_vec3() {
    Vec3 v;
    for (int i = 0; i < 3; ++i) v[i] = get<double>();
    return v;
  }
  std::string_view get_bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string get_string() { return std::string(get_bytes(get<std::uint64_t>())); }
  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

  // Guards element counts read from the file against the bytes present.
  void check_count(std::uint64_t count, std::size_t min_bytes_each) const {
    if (min_bytes_each != 0 && count > remaining() / min_bytes_each)
      throw Error(what_ + ": truncated or corrupt (count exceeds file size)");
  }

private:
  void need(std::size_t n) const {
    if (n > data_.size() - pos_) throw Error(what_ + ": truncated file");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
  std::string what_;
};

}  // namespace dgm::bin
