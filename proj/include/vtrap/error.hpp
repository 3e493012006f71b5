#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace vtrap {

// Base of every library error. The category maps onto CLI exit codes.
class Error : public std::runtime_error {
 public:
  enum class Kind { Input, Geometry, SearchCap, Internal };

  Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(Kind::Input, what) {}
};

class GeometryError : public Error {
 public:
  explicit GeometryError(const std::string& what) : Error(Kind::Geometry, what) {}
};

class SearchCapError : public Error {
 public:
  SearchCapError(std::uint64_t count, const std::string& what)
      : Error(Kind::SearchCap, what), count_(count) {}

  std::uint64_t count() const noexcept { return count_; }

 private:
  std::uint64_t count_;
};

}  // namespace vtrap
