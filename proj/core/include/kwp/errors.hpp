#pragma once

#include <stdexcept>
#include <string>

namespace kwp {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when |cos(theta)| falls below kChartGuard during an RHS evaluation.
class ChartSingularity : public Error {
public:
    explicit ChartSingularity(double theta)
        : Error("chart singularity: |cos(theta)| below guard at theta=" + std::to_string(theta)),
          theta_(theta) {}
    [[nodiscard]] double theta() const { return theta_; }

private:
    double theta_;
};

inline constexpr double kChartGuard = 1e-6;

}  // namespace kwp
