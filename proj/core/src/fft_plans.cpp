// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include "fft_plans.hpp"

#include <map>
#include <mutex>
#include <string>
#include <utility>

#include "sleeptl/error.hpp"

namespace sleeptl::detail {
namespace {

// FFTW planning is not thread-safe; execution on fresh arrays is.
class Plan {
 public:
  Plan(std::size_t n, bool forward) {
    double* real = fftw_alloc_real(n);
    fftw_complex* cplx = fftw_alloc_complex(n / 2 + 1);
    const int len = static_cast<int>(n);
    plan_ = forward ? fftw_plan_dft_r2c_1d(len, real, cplx, FFTW_ESTIMATE)
                    : fftw_plan_dft_c2r_1d(len, cplx, real, FFTW_ESTIMATE);
    fftw_free(real);
    fftw_free(cplx);
    if (!plan_) throw Error("FFTW planning failed for n=" + std::to_string(n));
  }
  ~Plan() { fftw_destroy_plan(plan_); }
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;

  fftw_plan get() const { return plan_; }

 private:
  fftw_plan plan_;
};

const Plan& plan_for(std::size_t n, bool forward) {
  static std::mutex mu;
  static std::map<std::pair<std::size_t, bool>, std::unique_ptr<Plan>> plans;
  std::lock_guard lock(mu);
  auto& p = plans[{n, forward}];
  if (!p) p = std::make_unique<Plan>(n, forward);
  return *p;
}

}  // namespace

void execute_r2c(std::size_t n, double* in, fftw_complex* out) {
  fftw_execute_dft_r2c(plan_for(n, true).get(), in, out);
}

void execute_c2r(std::size_t n, fftw_complex* in, double* out) {
  fftw_execute_dft_c2r(plan_for(n, false).get(), in, out);
}

}  // namespace sleeptl::detail
