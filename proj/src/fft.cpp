#include "emsim/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>

#include "emsim/common.hpp"

namespace emsim {

namespace {

// fftw planning is not thread-safe; execution with fftw_execute_dft is.  Plans
// are created with FFTW_ESTIMATE for run-to-run determinism and
// FFTW_UNALIGNED so they accept any buffer.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache c;
    return c;
  }

  fftw_plan get(std::size_t n) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    std::vector<std::complex<double>> tmp(n);
    fftw_plan p = fftw_plan_dft_1d(
        static_cast<int>(n), reinterpret_cast<fftw_complex*>(tmp.data()),
        reinterpret_cast<fftw_complex*>(tmp.data()), FFTW_FORWARD,
        FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans_.emplace(n, p);
    return p;
  }

 private:
  std::mutex mu_;
  std::map<std::size_t, fftw_plan> plans_;
};

}  // namespace

void fft_forward(std::size_t n, const std::complex<double>* in, std::complex<double>* out) {
  if (n == 0) throw InvalidArgument("fft_forward: empty input");
  fftw_plan p = PlanCache::instance().get(n);
  fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in)),
                   reinterpret_cast<fftw_complex*>(out));
}

std::vector<std::complex<double>> fft_forward(const std::vector<std::complex<double>>& in) {
  std::vector<std::complex<double>> out(in.size());
  fft_forward(in.size(), in.data(), out.data());
  return out;
}

std::string window_name(Window w) {
  switch (w) {
    case Window::Rectangular: return "rectangular";
    case Window::Hann: return "hann";
    case Window::Hamming: return "hamming";
  }
  return "unknown";
}

std::vector<double> make_window(Window w, std::size_t n) {
  if (n == 0) throw InvalidArgument("make_window: zero length");
  std::vector<double> out(n, 1.0);
  switch (w) {
    case Window::Rectangular:
      break;
    case Window::Hann:
      for (std::size_t i = 0; i < n; ++i)
        out[i] = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(n));
      break;
    case Window::Hamming:
      for (std::size_t i = 0; i < n; ++i)
        out[i] = 0.54 - 0.46 * std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(n));
      break;
  }
  return out;
}

double window_sum(const std::vector<double>& w) {
  double s = 0.0;
  for (double v : w) s += v;
  return s;
}

}  // namespace emsim
