#pragma once

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

namespace emsim {

// Forward complex FFT (unnormalized, FFTW convention).  in and out must have
// size n; in-place operation (in == out) is allowed.
void fft_forward(std::size_t n, const std::complex<double>* in, std::complex<double>* out);

std::vector<std::complex<double>> fft_forward(const std::vector<std::complex<double>>& in);

enum class Window { Rectangular, Hann, Hamming };

std::string window_name(Window w);

// Periodic window of length n (DFT-even convention).
std::vector<double> make_window(Window w, std::size_t n);

// Sum of window samples; used for amplitude corrections in analytic checks.
double window_sum(const std::vector<double>& w);

}  // namespace emsim
