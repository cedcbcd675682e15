#pragma once

#include <limits>
#include <ostream>

namespace splitflow {

/// A value in (-inf, +inf]. Addition with +inf saturates.
class ExtReal {
 public:
  constexpr ExtReal() = default;
  constexpr ExtReal(double v) : value_(v) {}  // NOLINT(google-explicit-constructor)

  static constexpr ExtReal infinity() {
    ExtReal r;
    r.infinite_ = true;
    return r;
  }

  constexpr bool is_finite() const { return !infinite_; }
  constexpr bool is_infinite() const { return infinite_; }

  /// Plain double; +inf maps to IEEE infinity.
  constexpr double value() const {
    return infinite_ ? std::numeric_limits<double>::infinity() : value_;
  }

  friend constexpr ExtReal operator+(ExtReal a, ExtReal b) {
    if (a.infinite_ || b.infinite_) return infinity();
    return ExtReal(a.value_ + b.value_);
  }
  friend constexpr ExtReal operator*(double s, ExtReal a) {
    // s > 0 is the only case used for potentials (positive rescaling)
    if (a.infinite_) return s == 0.0 ? ExtReal(0.0) : infinity();
    return ExtReal(s * a.value_);
  }
  friend constexpr bool operator==(ExtReal a, ExtReal b) {
    return a.infinite_ == b.infinite_ && (a.infinite_ || a.value_ == b.value_);
  }
  friend constexpr bool operator<(ExtReal a, ExtReal b) {
    if (a.infinite_) return false;
    if (b.infinite_) return true;
    return a.value_ < b.value_;
  }
  friend constexpr bool operator<=(ExtReal a, ExtReal b) { return !(b < a); }

  friend std::ostream& operator<<(std::ostream& os, ExtReal a) {
    if (a.infinite_) return os << "+inf";
    return os << a.value_;
  }

 private:
  double value_ = 0.0;
  bool infinite_ = false;
};

}  // namespace splitflow
