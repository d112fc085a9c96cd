// Copyright 2026 The cgnscope Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cgn {

/// Malformed textual or binary input.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Well-formed input that violates an operation's precondition.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed bencode; carries the byte offset where decoding stopped.
class DecodeError : public ParseError {
 public:
  DecodeError(const std::string& what, std::size_t offset)
      : ParseError(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// NAT ran out of external ports or pool addresses.
class AllocationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A probe's baseline exchange got no answer.
class Unreachable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cgn
