#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace multiarm {

/// 1-based robot identifier.
using RobotId = int;

enum class Hand { Left = 0, Right = 1 };
enum class Modality { Independent, Coordinated };
enum class ClosureCommand { Neutral, Increase, Decrease };

inline constexpr std::array<Hand, 2> kHands{Hand::Left, Hand::Right};

constexpr std::size_t index(Hand h) { return static_cast<std::size_t>(h); }
constexpr Hand other(Hand h) { return h == Hand::Left ? Hand::Right : Hand::Left; }

constexpr std::string_view to_string(Hand h) { return h == Hand::Left ? "left" : "right"; }
constexpr std::string_view to_string(Modality m) {
  return m == Modality::Independent ? "IC" : "CC";
}

inline std::optional<Hand> parse_hand(std::string_view s) {
  if (s == "left") return Hand::Left;
  if (s == "right") return Hand::Right;
  return std::nullopt;
}

inline std::optional<Modality> parse_modality(std::string_view s) {
  if (s == "IC") return Modality::Independent;
  if (s == "CC") return Modality::Coordinated;
  return std::nullopt;
}

}  // namespace multiarm
