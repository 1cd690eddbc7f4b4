#pragma once

#include <stdexcept>
#include <string>

namespace dmn {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct ShapeMismatch : Error {
  using Error::Error;
};
struct IndexOutOfRange : Error {
  using Error::Error;
};
struct InvalidArgument : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct IsolatedVertex : Error {
  using Error::Error;
};

}  // namespace dmn
