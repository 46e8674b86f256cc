#pragma once

#include <gtest/gtest.h>

#include <random>

#include "mlc/error.hpp"

#define EXPECT_MLC_ERROR(stmt, expected_kind)                                      \
  do {                                                                             \
    try {                                                                          \
      stmt;                                                                        \
      ADD_FAILURE() << "expected " << mlc::to_string(expected_kind) << " error";   \
    } catch (const mlc::Error& e) {                                                \
      EXPECT_EQ(e.kind(), expected_kind) << e.what();                              \
    }                                                                              \
  } while (0)

namespace testing_support {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace testing_support
