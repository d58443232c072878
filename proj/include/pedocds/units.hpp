#pragma once

#include <algorithm>
#include <compare>
#include <string>

#include "pedocds/error.hpp"

namespace pedocds::units {

struct MillimetreTag {
  static constexpr const char* symbol = "mm";
};
struct DegreeTag {
  static constexpr const char* symbol = "deg";
};
struct ShoreATag {
  static constexpr const char* symbol = "ShoreA";
};

/// A scalar tagged with its unit. Quantities of different units do not mix.
template <class Unit, class Scalar = double>
class Quantity {
 public:
  using unit = Unit;
  using scalar = Scalar;

  constexpr Quantity() = default;
  constexpr explicit Quantity(Scalar value) : value_(value) {}

  constexpr Scalar value() const noexcept { return value_; }

  constexpr Quantity operator+(Quantity other) const { return Quantity(value_ + other.value_); }
  constexpr Quantity operator-(Quantity other) const { return Quantity(value_ - other.value_); }
  constexpr Quantity operator-() const { return Quantity(-value_); }
  constexpr Quantity operator*(Scalar k) const { return Quantity(value_ * k); }
  constexpr auto operator<=>(const Quantity&) const = default;

 private:
  Scalar value_{};
};

template <class Unit, class Scalar>
constexpr Quantity<Unit, Scalar> operator*(Scalar k, Quantity<Unit, Scalar> q) {
  return q * k;
}

using Millimetres = Quantity<MillimetreTag>;
using Degrees = Quantity<DegreeTag>;
using ShoreA = Quantity<ShoreATag>;

constexpr Millimetres operator""_mm(long double v) { return Millimetres(static_cast<double>(v)); }
constexpr Millimetres operator""_mm(unsigned long long v) { return Millimetres(static_cast<double>(v)); }
constexpr Degrees operator""_deg(long double v) { return Degrees(static_cast<double>(v)); }
constexpr Degrees operator""_deg(unsigned long long v) { return Degrees(static_cast<double>(v)); }
constexpr ShoreA operator""_shore(long double v) { return ShoreA(static_cast<double>(v)); }
constexpr ShoreA operator""_shore(unsigned long long v) { return ShoreA(static_cast<double>(v)); }

/// Closed interval [lo, hi] in one unit. Construction enforces lo <= hi.
template <class Unit, class Scalar = double>
class Band {
 public:
  using quantity = Quantity<Unit, Scalar>;

  constexpr Band() = default;
  Band(quantity lo, quantity hi) : lo_(lo), hi_(hi) {
    if (hi < lo) {
      throw ValidationError("band lower bound " + std::to_string(lo.value()) + " exceeds upper bound " +
                            std::to_string(hi.value()) + " " + Unit::symbol);
    }
  }
  Band(Scalar lo, Scalar hi) : Band(quantity(lo), quantity(hi)) {}

  static Band point(quantity q) { return Band(q, q); }

  constexpr quantity lo() const noexcept { return lo_; }
  constexpr quantity hi() const noexcept { return hi_; }
  constexpr quantity midpoint() const { return quantity((lo_.value() + hi_.value()) / 2); }
  constexpr quantity width() const { return hi_ - lo_; }

  constexpr bool contains(quantity q) const { return lo_ <= q && q <= hi_; }
  constexpr bool contains(const Band& other) const { return lo_ <= other.lo_ && other.hi_ <= hi_; }

  Band shifted(quantity delta) const { return Band(lo_ + delta, hi_ + delta); }
  Band hull(const Band& other) const { return Band(std::min(lo_, other.lo_), std::max(hi_, other.hi_)); }

  /// Value at fraction t of the band: 0 -> lo, 1 -> hi.
  quantity at(Scalar t) const { return quantity(lo_.value() + t * (hi_.value() - lo_.value())); }

  bool operator==(const Band&) const = default;

 private:
  quantity lo_{};
  quantity hi_{};
};

using MmBand = Band<MillimetreTag>;
using DegBand = Band<DegreeTag>;
using ShoreBand = Band<ShoreATag>;

/// Scalar band for dimensionless fractions of a length.
struct FractionBand {
  double lo = 0.0;
  double hi = 0.0;

  template <class Unit, class Scalar>
  Band<Unit, Scalar> of(Quantity<Unit, Scalar> whole) const {
    return Band<Unit, Scalar>(whole * lo, whole * hi);
  }
  bool operator==(const FractionBand&) const = default;
};

template <class Unit, class Scalar>
std::string format(const Band<Unit, Scalar>& b) {
  auto num = [](Scalar v) {
    std::string s = std::to_string(v);
    s.erase(s.find_last_not_of('0') + 1);
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
  };
  return "[" + num(b.lo().value()) + ", " + num(b.hi().value()) + "] " + Unit::symbol;
}

}  // namespace pedocds::units
