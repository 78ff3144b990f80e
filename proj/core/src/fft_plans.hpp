// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#pragma once

#include <fftw3.h>

#include <cstddef>
#include <memory>

namespace sleeptl::detail {

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

using FftwReal = std::unique_ptr<double, FftwDeleter>;
using FftwComplex = std::unique_ptr<fftw_complex, FftwDeleter>;

inline FftwReal fftw_real(std::size_t n) { return FftwReal(fftw_alloc_real(n)); }
inline FftwComplex fftw_complex_buf(std::size_t n) { return FftwComplex(fftw_alloc_complex(n)); }

/// Real-to-half-complex transform of length n (n / 2 + 1 outputs).
void execute_r2c(std::size_t n, double* in, fftw_complex* out);
/// Inverse of execute_r2c without the 1/n factor. Overwrites `in`.
void execute_c2r(std::size_t n, fftw_complex* in, double* out);

}  // namespace sleeptl::detail
