#pragma once

#include <gtest/gtest.h>

#include "radarfuse/error.hpp"

namespace radarfuse::testing_support {

template <class Fn>
::testing::AssertionResult throws_kind(Fn&& fn, ErrorKind kind) {
    try {
        fn();
    } catch (const Error& e) {
        if (e.kind() == kind) return ::testing::AssertionSuccess();
        return ::testing::AssertionFailure() << "threw " << to_string(e.kind()) << ": " << e.what();
    }
    return ::testing::AssertionFailure() << "did not throw " << to_string(kind);
}

}  // namespace radarfuse::testing_support
