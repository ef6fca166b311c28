#pragma once

#include <doctest.h>

#include "demark/core/error.hpp"

/// Runs `expr` and checks it throws demark::Error of the given kind.
#define CHECK_ERROR_KIND(expr, expected_kind)                                   \
  do {                                                                          \
    bool thrown_ = false;                                                       \
    try {                                                                       \
      (void)(expr);                                                             \
    } catch (const demark::Error& e_) {                                         \
      thrown_ = true;                                                           \
      CHECK_MESSAGE(e_.kind() == (expected_kind), "kind was ", demark::to_string(e_.kind())); \
    }                                                                           \
    CHECK_MESSAGE(thrown_, "expected a demark::Error from " #expr);             \
  } while (false)
