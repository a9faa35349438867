#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "dualspoof/error.hpp"

namespace dualspoof {

// Five-way component-level label. The first token of a combination class
// names the speech component, the second the environment component.
enum class Klass : int {
  original = 0,
  bonafide_bonafide = 1,
  spoof_bonafide = 2,
  bonafide_spoof = 3,
  spoof_spoof = 4,
};

inline constexpr std::size_t kNumClasses = 5;

inline constexpr std::array<Klass, kNumClasses> kAllClasses = {
    Klass::original, Klass::bonafide_bonafide, Klass::spoof_bonafide,
    Klass::bonafide_spoof, Klass::spoof_spoof};

enum class Authenticity { bonafide, spoof };

inline std::string_view token(Klass k) {
  switch (k) {
    case Klass::original: return "original";
    case Klass::bonafide_bonafide: return "bonafide_bonafide";
    case Klass::spoof_bonafide: return "spoof_bonafide";
    case Klass::bonafide_spoof: return "bonafide_spoof";
    case Klass::spoof_spoof: return "spoof_spoof";
  }
  return "?";
}

inline Klass parse_klass(std::string_view s) {
  for (Klass k : kAllClasses) {
    if (token(k) == s) return k;
  }
  throw ParseError("unknown class token '" + std::string(s) + "'");
}

inline int index(Klass k) { return static_cast<int>(k); }

struct ClassLabel {
  Klass klass = Klass::original;

  ClassLabel() = default;
  ClassLabel(Klass k) : klass(k) {}  // NOLINT: implicit by design of the schema

  std::optional<Authenticity> speech_label() const {
    switch (klass) {
      case Klass::original: return std::nullopt;
      case Klass::bonafide_bonafide:
      case Klass::bonafide_spoof: return Authenticity::bonafide;
      case Klass::spoof_bonafide:
      case Klass::spoof_spoof: return Authenticity::spoof;
    }
    return std::nullopt;
  }

  std::optional<Authenticity> env_label() const {
    switch (klass) {
      case Klass::original: return std::nullopt;
      case Klass::bonafide_bonafide:
      case Klass::spoof_bonafide: return Authenticity::bonafide;
      case Klass::bonafide_spoof:
      case Klass::spoof_spoof: return Authenticity::spoof;
    }
    return std::nullopt;
  }

  int original_label() const { return klass == Klass::original ? 1 : 0; }

  bool operator==(const ClassLabel&) const = default;
};

inline Klass klass_from_components(bool speech_spoof, bool env_spoof) {
  if (speech_spoof) return env_spoof ? Klass::spoof_spoof : Klass::spoof_bonafide;
  return env_spoof ? Klass::bonafide_spoof : Klass::bonafide_bonafide;
}

}  // namespace dualspoof
