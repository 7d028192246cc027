#include "zslfeat/rng.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace zsl {

double Rng::uniform() {
    // 53-bit mantissa draw
    return static_cast<double>(engine_() >> 11) * (1.0 / 9007199254740992.0);
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::size_t Rng::index(std::size_t n) {
    // rejection sampling for an unbiased bounded draw
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do {
        v = engine_();
    } while (v >= limit);
    return static_cast<std::size_t>(v % n);
}

std::string Rng::serialize() const {
    std::ostringstream os;
    os << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ';
    os.precision(17);
    os << spare_;
    return os.str();
}

Rng Rng::deserialize(const std::string& text) {
    Rng r;
    std::istringstream is(text);
    is >> r.engine_;
    int spare_flag = 0;
    is >> spare_flag >> r.spare_;
    if (!is) throw std::runtime_error("Rng::deserialize: malformed state string");
    r.has_spare_ = spare_flag != 0;
    return r;
}

Tensor gaussian_sample(Rng& rng, Shape shape) {
    std::vector<double> d(shape_numel(shape));
    for (auto& v : d) v = rng.normal();
    return Tensor::from_data(std::move(shape), std::move(d));
}

Tensor interpolate(const Tensor& real, const Tensor& fake, Rng& rng) {
    if (real.shape() != fake.shape() || real.shape().size() != 2) {
        throw ShapeError("interpolate: shapes must be equal 2-d, got " + shape_str(real.shape()) +
                         " vs " + shape_str(fake.shape()));
    }
    const std::size_t b = real.dim(0), d = real.dim(1);
    std::vector<double> out(b * d);
    const auto& x = real.data();
    const auto& y = fake.data();
    for (std::size_t i = 0; i < b; ++i) {
        const double eps = rng.uniform();
        for (std::size_t j = 0; j < d; ++j) {
            out[i * d + j] = eps * x[i * d + j] + (1.0 - eps) * y[i * d + j];
        }
    }
    return Tensor::from_data({b, d}, std::move(out));
}

}  // namespace zsl
