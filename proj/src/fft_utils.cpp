#include "fft_utils.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <mutex>
#include <stdexcept>

namespace spdreg::detail {

namespace {

// FFTW plan creation is not thread-safe; execution via the new-array API is.
// Plans are cached per transform size for the life of the process and created
// with FFTW_UNALIGNED so they accept whatever buffers callers hand us.
std::mutex plan_mutex;

fftw_plan r2c_plan(int n) {
    static std::map<int, fftw_plan> cache;
    const std::lock_guard<std::mutex> lock(plan_mutex);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    std::vector<double> in(static_cast<std::size_t>(n));
    std::vector<std::complex<double>> out(static_cast<std::size_t>(n / 2 + 1));
    fftw_plan plan = fftw_plan_dft_r2c_1d(
        n, in.data(), reinterpret_cast<fftw_complex*>(out.data()),
        FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!plan) throw std::runtime_error("fftw r2c plan creation failed");
    cache.emplace(n, plan);
    return plan;
}

fftw_plan c2r_plan(int n) {
    static std::map<int, fftw_plan> cache;
    const std::lock_guard<std::mutex> lock(plan_mutex);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    std::vector<std::complex<double>> in(static_cast<std::size_t>(n / 2 + 1));
    std::vector<double> out(static_cast<std::size_t>(n));
    fftw_plan plan = fftw_plan_dft_c2r_1d(
        n, reinterpret_cast<fftw_complex*>(in.data()), out.data(),
        FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!plan) throw std::runtime_error("fftw c2r plan creation failed");
    cache.emplace(n, plan);
    return plan;
}

}  // namespace

int next_fast_size(int n) {
    int size = 1;
    while (size < n) size *= 2;
    return size;
}

std::vector<std::complex<double>> rfft(std::span<const double> x, int n) {
    if (static_cast<int>(x.size()) > n) {
        throw std::invalid_argument("rfft: input longer than transform size");
    }
    std::vector<double> in(static_cast<std::size_t>(n), 0.0);
    std::memcpy(in.data(), x.data(), x.size() * sizeof(double));
    std::vector<std::complex<double>> out(static_cast<std::size_t>(n / 2 + 1));
    fftw_execute_dft_r2c(r2c_plan(n), in.data(),
                         reinterpret_cast<fftw_complex*>(out.data()));
    return out;
}

std::vector<double> irfft(std::span<const std::complex<double>> spectrum, int n) {
    if (static_cast<int>(spectrum.size()) != n / 2 + 1) {
        throw std::invalid_argument("irfft: spectrum size does not match n");
    }
    // c2r destroys its input, so work on a copy
    std::vector<std::complex<double>> in(spectrum.begin(), spectrum.end());
    std::vector<double> out(static_cast<std::size_t>(n));
    fftw_execute_dft_c2r(c2r_plan(n), reinterpret_cast<fftw_complex*>(in.data()),
                         out.data());
    for (double& v : out) v /= static_cast<double>(n);
    return out;
}

}  // namespace spdreg::detail
