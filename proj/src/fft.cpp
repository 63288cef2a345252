#include "stmf/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <stdexcept>

namespace stmf {

namespace {

std::mutex plan_mutex;

struct PlanKey {
    size_t rows, cols;
    int sign;
    bool operator<(const PlanKey& o) const {
        if (rows != o.rows) return rows < o.rows;
        if (cols != o.cols) return cols < o.cols;
        return sign < o.sign;
    }
};

std::map<PlanKey, fftw_plan>& plan_cache() {
    static std::map<PlanKey, fftw_plan> cache;
    return cache;
}

// FFTW_ESTIMATE keeps plan selection deterministic; FFTW_UNALIGNED lets the
// cached plan run on any caller buffer via the new-array interface.
fftw_plan get_plan(size_t rows, size_t cols, int sign) {
    std::lock_guard<std::mutex> lock(plan_mutex);
    PlanKey key{rows, cols, sign};
    auto it = plan_cache().find(key);
    if (it != plan_cache().end()) return it->second;

    std::vector<fftw_complex> buf(rows * cols);
    fftw_plan p;
    if (rows == 1) {
        p = fftw_plan_dft_1d(static_cast<int>(cols), buf.data(), buf.data(), sign,
                             FFTW_ESTIMATE | FFTW_UNALIGNED);
    } else {
        p = fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), buf.data(),
                             buf.data(), sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    }
    if (!p) throw std::runtime_error("fftw plan creation failed");
    plan_cache()[key] = p;
    return p;
}

} // namespace

void fft_1d(std::vector<std::complex<double>>& data, bool inverse) {
    const size_t n = data.size();
    if (n == 0) return;
    fftw_plan p = get_plan(1, n, inverse ? FFTW_BACKWARD : FFTW_FORWARD);
    auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(p, ptr, ptr);
    if (inverse) {
        const double inv = 1.0 / static_cast<double>(n);
        for (auto& c : data) c *= inv;
    }
}

void fft_2d(std::vector<std::complex<double>>& data, size_t rows, size_t cols, bool inverse) {
    if (data.size() != rows * cols) throw std::invalid_argument("fft_2d: size mismatch");
    fftw_plan p = get_plan(rows, cols, inverse ? FFTW_BACKWARD : FFTW_FORWARD);
    auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(p, ptr, ptr);
    if (inverse) {
        const double inv = 1.0 / static_cast<double>(rows * cols);
        for (auto& c : data) c *= inv;
    }
}

} // namespace stmf
