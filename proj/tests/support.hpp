#pragma once

#include <doctest.h>

#include "error.hpp"

// Runs expr and checks it throws mhng::Error carrying the given code.
#define CHECK_THROWS_CODE(expr, expected_code)                       \
  do {                                                               \
    bool thrown_ = false;                                            \
    try {                                                            \
      (void)(expr);                                                  \
    } catch (const mhng::Error& e_) {                                \
      thrown_ = true;                                                \
      CHECK_MESSAGE(e_.code() == (expected_code), e_.what());        \
    }                                                                \
    CHECK_MESSAGE(thrown_, "expected an mhng::Error from " #expr);   \
  } while (0)
