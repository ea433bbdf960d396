#pragma once

// Grid labelings, click-to-cell mapping and the theoretical password space.
// Everything here is a pure function over values.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <boost/multiprecision/cpp_int.hpp>

#include "clickotp/error.hpp"

namespace clickotp {

inline constexpr int kGridSide = 3;
inline constexpr int kGridCells = kGridSide * kGridSide;

/// Order in which the nine cells of an image are numbered 1..9.
enum class LabelingStatus : std::uint8_t {
  LeftToRight,  // row-major from the top-left
  RightToLeft,  // row-major, each row mirrored
  TopToBottom,  // column-major from the top-left
  BottomToTop,  // column-major, each column mirrored
};

inline constexpr std::array<LabelingStatus, 4> kAllStatuses = {
    LabelingStatus::LeftToRight, LabelingStatus::RightToLeft,
    LabelingStatus::TopToBottom, LabelingStatus::BottomToTop};

constexpr std::string_view to_string(LabelingStatus s) noexcept {
  switch (s) {
    case LabelingStatus::LeftToRight: return "LeftToRight";
    case LabelingStatus::RightToLeft: return "RightToLeft";
    case LabelingStatus::TopToBottom: return "TopToBottom";
    case LabelingStatus::BottomToTop: return "BottomToTop";
  }
  return "?";
}

/// Accepts the canonical names and the two-letter forms (LR, RL, TB, BT).
inline std::optional<LabelingStatus> parse_status(std::string_view text) {
  for (LabelingStatus s : kAllStatuses) {
    if (text == to_string(s)) return s;
  }
  if (text == "LR") return LabelingStatus::LeftToRight;
  if (text == "RL") return LabelingStatus::RightToLeft;
  if (text == "TB") return LabelingStatus::TopToBottom;
  if (text == "BT") return LabelingStatus::BottomToTop;
  return std::nullopt;
}

struct GridCell {
  int row = 0;  // 0..2, top to bottom
  int col = 0;  // 0..2, left to right

  constexpr bool valid() const noexcept {
    return row >= 0 && row < kGridSide && col >= 0 && col < kGridSide;
  }
  friend constexpr bool operator==(const GridCell&, const GridCell&) = default;
};

/// A grid label (and OTP digit); always in 1..9.
class GridLabel {
 public:
  constexpr explicit GridLabel(int value) : value_(static_cast<std::uint8_t>(value)) {
    if (value < 1 || value > kGridCells) {
      fail(ErrorCode::Domain, "grid label must be in 1..9, got " + std::to_string(value));
    }
  }

  constexpr int value() const noexcept { return value_; }
  friend constexpr bool operator==(GridLabel, GridLabel) = default;

 private:
  std::uint8_t value_;
};

constexpr GridLabel label_of(LabelingStatus status, GridCell cell) {
  if (!cell.valid()) fail(ErrorCode::Domain, "grid cell out of range");
  const int r = cell.row;
  const int c = cell.col;
  switch (status) {
    case LabelingStatus::LeftToRight: return GridLabel(3 * r + c + 1);
    case LabelingStatus::RightToLeft: return GridLabel(3 * r + (2 - c) + 1);
    case LabelingStatus::TopToBottom: return GridLabel(3 * c + r + 1);
    case LabelingStatus::BottomToTop: return GridLabel(3 * c + (2 - r) + 1);
  }
  fail(ErrorCode::Domain, "unknown labeling status");
}

constexpr GridCell cell_of(LabelingStatus status, GridLabel label) {
  const int major = (label.value() - 1) / 3;
  const int minor = (label.value() - 1) % 3;
  switch (status) {
    case LabelingStatus::LeftToRight: return {major, minor};
    case LabelingStatus::RightToLeft: return {major, 2 - minor};
    case LabelingStatus::TopToBottom: return {minor, major};
    case LabelingStatus::BottomToTop: return {2 - minor, major};
  }
  fail(ErrorCode::Domain, "unknown labeling status");
}

/// The cell a legitimate user must click at a level whose OTP digit is `digit`.
constexpr GridCell expected_cell(LabelingStatus status, GridLabel digit) {
  return cell_of(status, digit);
}

/// Maps a click at (x, y) inside a w x h rendered box to its grid cell.
/// Clicks on the right or bottom edge clamp into the last cell.
inline GridCell map_click(double x, double y, double w, double h) {
  if (!(w > 0.0) || !(h > 0.0) || !std::isfinite(w) || !std::isfinite(h)) {
    fail(ErrorCode::OutOfBounds, "rendered size must be positive");
  }
  // NaN fails every comparison, so it is rejected here as well.
  if (!(x >= 0.0 && x <= w && y >= 0.0 && y <= h)) {
    fail(ErrorCode::OutOfBounds, "click outside the image box");
  }
  const auto axis = [](double v, double extent) {
    const int k = static_cast<int>(std::floor(kGridSide * v / extent));
    return k < kGridSide - 1 ? k : kGridSide - 1;
  };
  return {axis(y, h), axis(x, w)};
}

/// Pixel at the centre of `cell` in a w x h box; handy for scripted clients.
struct PixelPoint {
  double x = 0;
  double y = 0;
};

inline PixelPoint cell_center(GridCell cell, double w, double h) {
  return {(cell.col + 0.5) * w / kGridSide, (cell.row + 0.5) * h / kGridSide};
}

using BigUint = boost::multiprecision::cpp_int;

/// Parameters of the theoretical password space.
struct SpaceParams {
  std::uint64_t w = 450;  // image width, pixels
  std::uint64_t h = 450;  // image height, pixels
  std::uint64_t t = 150;  // tolerance-square side, pixels
  std::uint64_t m = 4;    // images per challenge level
  std::uint64_t n = 4;    // labeling statuses
  std::uint64_t c = 3;    // levels (click points)

  // Bound on n*c; keeps the exact result to a few hundred kilobytes.
  static constexpr std::uint64_t kMaxExponent = 4096;

  void validate() const {
    if (w == 0 || h == 0 || t == 0 || m == 0 || n == 0 || c == 0) {
      fail(ErrorCode::Domain, "all space parameters must be strictly positive");
    }
    if (t > w || t > h) fail(ErrorCode::Domain, "t must not exceed w or h");
    if (n > kMaxExponent || c > kMaxExponent || n * c > kMaxExponent) {
      fail(ErrorCode::Domain, "n*c exceeds " + std::to_string(kMaxExponent));
    }
  }
};

/// S = (((floor(w*h / t^2)) * m)^n)^c in exact integer arithmetic.
inline BigUint password_space(const SpaceParams& p) {
  p.validate();
  const BigUint cells = (BigUint(p.w) * p.h) / (BigUint(p.t) * p.t);
  const BigUint per_level = cells * p.m;
  const BigUint with_status = boost::multiprecision::pow(per_level, static_cast<unsigned>(p.n));
  return boost::multiprecision::pow(with_status, static_cast<unsigned>(p.c));
}

/// Decimal scientific form: mantissa rounded half-up to `digits` decimals.
struct Scientific {
  std::string mantissa;  // "d.ddd"
  std::size_t exponent = 0;

  std::string render() const { return mantissa + "×10^" + std::to_string(exponent); }
};

inline Scientific to_scientific(const BigUint& value, int digits = 3) {
  std::string dec = value.str();
  std::size_t exponent = dec.size() - 1;
  std::string kept = dec.substr(0, std::min<std::size_t>(dec.size(), digits + 1));
  kept.resize(digits + 1, '0');
  if (dec.size() > kept.size() && dec[kept.size()] >= '5') {
    int i = static_cast<int>(kept.size()) - 1;
    while (i >= 0 && kept[i] == '9') kept[i--] = '0';
    if (i >= 0) {
      ++kept[i];
    } else {
      kept.insert(kept.begin(), '1');
      kept.pop_back();
      ++exponent;
    }
  }
  Scientific out;
  out.mantissa = kept.substr(0, 1);
  if (digits > 0) out.mantissa += "." + kept.substr(1);
  out.exponent = exponent;
  return out;
}

}  // namespace clickotp
