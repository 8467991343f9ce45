#pragma once

#include <stdexcept>
#include <string>

namespace splr {

/// Base of every error thrown by the library.
class error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Triangular factor has a diagonal below the rank tolerance.
class rank_deficient : public error {
public:
  using error::error;
};

class out_of_domain : public error {
public:
  using error::error;
};

class invalid_argument : public error {
public:
  using error::error;
};

class degenerate_column : public error {
public:
  using error::error;
};

class all_steps_invalid : public error {
public:
  using error::error;
};

/// A rank-one factor collapsed to all zeros: no useful correction was found.
class degenerate_factor : public error {
public:
  using error::error;
};

class empty_model : public error {
public:
  using error::error;
};

class malformed_document : public error {
public:
  using error::error;
};

class zero_denominator : public error {
public:
  using error::error;
};

} // namespace splr
