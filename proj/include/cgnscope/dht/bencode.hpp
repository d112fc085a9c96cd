// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

// Strict bencode codec. Decoding accepts only canonical input, so
// decode followed by encode reproduces the original bytes.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cgnscope/error.hpp"

namespace cgn::dht {

struct Value;
using List = std::vector<Value>;
using Dict = std::map<std::string, Value>;  // std::string compares bytewise, matching bencode key order

struct Value {
  std::variant<std::int64_t, std::string, List, Dict> v;

  Value() : v(std::int64_t{0}) {}
  Value(std::int64_t i) : v(i) {}
  Value(int i) : v(std::int64_t{i}) {}
  Value(std::string s) : v(std::move(s)) {}
  Value(const char* s) : v(std::string(s)) {}
  Value(List l) : v(std::move(l)) {}
  Value(Dict d) : v(std::move(d)) {}

  bool is_int() const { return std::holds_alternative<std::int64_t>(v); }
  bool is_string() const { return std::holds_alternative<std::string>(v); }
  bool is_list() const { return std::holds_alternative<List>(v); }
  bool is_dict() const { return std::holds_alternative<Dict>(v); }

  std::int64_t as_int() const { return get<std::int64_t>("integer"); }
  const std::string& as_string() const { return get<std::string>("string"); }
  const List& as_list() const { return get<List>("list"); }
  const Dict& as_dict() const { return get<Dict>("dictionary"); }

  /// Dictionary member or nullptr.
  const Value* find(const std::string& key) const {
    const auto* d = std::get_if<Dict>(&v);
    if (!d) return nullptr;
    auto it = d->find(key);
    return it == d->end() ? nullptr : &it->second;
  }

  friend bool operator==(const Value&, const Value&) = default;

 private:
  template <typename T>
  const T& get(const char* what) const {
    const auto* p = std::get_if<T>(&v);
    if (!p) throw ParseError(std::string("bencode value is not a ") + what);
    return *p;
  }
};

namespace detail {

inline void encode_into(const Value& val, std::string& out) {
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::int64_t>) {
          out += 'i';
          out += std::to_string(x);
          out += 'e';
        } else if constexpr (std::is_same_v<T, std::string>) {
          out += std::to_string(x.size());
          out += ':';
          out += x;
        } else if constexpr (std::is_same_v<T, List>) {
          out += 'l';
          for (const auto& e : x) encode_into(e, out);
          out += 'e';
        } else {
          out += 'd';
          for (const auto& [k, e] : x) {
            out += std::to_string(k.size());
            out += ':';
            out += k;
            encode_into(e, out);
          }
          out += 'e';
        }
      },
      val.v);
}

class Decoder {
 public:
  Decoder(std::string_view in, int max_depth) : in_(in), max_depth_(max_depth) {}

  Value document() {
    auto v = value(0);
    if (pos_ != in_.size()) fail("trailing bytes");
    return v;
  }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
  int max_depth_;

  [[noreturn]] void fail(const std::string& why) const { throw DecodeError("bencode: " + why, pos_); }

  char peek() const {
    if (pos_ >= in_.size()) fail("unexpected end of input");
    return in_[pos_];
  }

  // Digits up to `stop`; canonical means no leading zero and no "-0".
  std::int64_t number(char stop, bool allow_negative) {
    auto start = pos_;
    bool neg = false;
    if (allow_negative && peek() == '-') {
      neg = true;
      ++pos_;
    }
    auto digits = pos_;
    std::uint64_t mag = 0;
    while (peek() != stop) {
      char c = in_[pos_];
      if (c < '0' || c > '9') fail("bad digit");
      if (mag > (static_cast<std::uint64_t>(INT64_MAX) + 1 - (c - '0')) / 10) fail("integer overflow");
      mag = mag * 10 + static_cast<std::uint64_t>(c - '0');
      ++pos_;
    }
    auto len = pos_ - digits;
    if (len == 0) fail("empty number");
    if (in_[digits] == '0' && (len > 1 || neg)) {
      pos_ = start;
      fail("non-canonical number");
    }
    if (!neg && mag > static_cast<std::uint64_t>(INT64_MAX)) fail("integer overflow");
    ++pos_;  // stop char
    return neg ? static_cast<std::int64_t>(0 - mag) : static_cast<std::int64_t>(mag);
  }

  std::string string() {
    auto len = static_cast<std::uint64_t>(number(':', false));
    if (len > in_.size() - pos_) fail("string runs past end");
    std::string s(in_.substr(pos_, len));
    pos_ += len;
    return s;
  }

  Value value(int depth) {
    if (depth > max_depth_) fail("nesting too deep");
    char c = peek();
    if (c == 'i') {
      ++pos_;
      return Value(number('e', true));
    }
    if (c == 'l') {
      ++pos_;
      List l;
      while (peek() != 'e') l.push_back(value(depth + 1));
      ++pos_;
      return Value(std::move(l));
    }
    if (c == 'd') {
      ++pos_;
      Dict d;
      std::string prev;
      bool first = true;
      while (peek() != 'e') {
        auto key_at = pos_;
        if (peek() < '0' || peek() > '9') fail("dictionary key must be a string");
        auto k = string();
        if (!first && k <= prev) {
          pos_ = key_at;
          fail("dictionary keys out of order");
        }
        first = false;
        d.emplace_hint(d.end(), k, value(depth + 1));
        prev = std::move(k);
      }
      ++pos_;
      return Value(std::move(d));
    }
    if (c >= '0' && c <= '9') return Value(string());
    fail(std::string("unexpected byte 0x") + "0123456789abcdef"[(c >> 4) & 15] + "0123456789abcdef"[c & 15]);
  }
};

}  // namespace detail

inline std::string encode(const Value& v) {
  std::string out;
  detail::encode_into(v, out);
  return out;
}

inline Value decode(std::string_view bytes, int max_depth = 64) { return detail::Decoder(bytes, max_depth).document(); }

}  // namespace cgn::dht
