#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "fgt/data/dataset.hpp"

namespace fgt {

enum class Primitive { Disk, Ring, Square, Triangle, HBar, VBar, Cross };

std::string_view to_string(Primitive p);
Primitive primitive_from_string(std::string_view name);

/// One class prototype: a primitive centred at (cx, cy) pixels with radius `scale`.
struct Prototype {
  Primitive shape = Primitive::Disk;
  double cx = 24.0;
  double cy = 24.0;
  double scale = 12.0;

  friend bool operator==(const Prototype&, const Prototype&) = default;
};

/// Rendering knobs of a synthetic domain. Two domains that differ only in these
/// knobs share the label space but not the image distribution.
struct DomainParams {
  std::array<Prototype, 7> prototypes{};
  double texture_frequency = 3.0;    // grating cycles per image width
  double texture_orientation = 0.0;  // degrees
  double background = 0.15;
  double noise_sigma = 0.08;
  double contrast = 0.7;
  double brightness = 0.0;           // global additive shift
  double rotation = 0.0;             // degrees applied to every prototype
  double position_jitter = 2.0;      // +- pixels
  double scale_jitter = 0.12;        // relative
  double subject_brightness = 0.04;  // +- per-subject offset
  int subjects = 10;

  friend bool operator==(const DomainParams&, const DomainParams&) = default;
};

/// Throws ConfigError unless values keep images in [0,1] and prototypes are pairwise distinct.
void validate(const DomainParams& params);

/// The reference "source" domain.
DomainParams default_source_domain();

/// Moves every knob of `base` along a fixed direction by `magnitude`
/// (0 reproduces `base`; 1 is a strong shift).
DomainParams shifted_domain(const DomainParams& base, double magnitude);

inline constexpr double kDefaultShift = 0.6;

/// Renders 7 * n_per_class samples, class-interleaved. Subject ids are assigned
/// in contiguous blocks within each class. Deterministic in (params, seed).
Dataset gen_synthetic_domain(const DomainParams& params, std::size_t n_per_class, std::uint64_t seed,
                             const std::string& name = "synthetic");

/// JSON with one key per DomainParams field; unknown keys are an error.
DomainParams load_domain_params(const std::filesystem::path& path);
void save_domain_params(const DomainParams& params, const std::filesystem::path& path);
std::string domain_params_to_json(const DomainParams& params);
DomainParams domain_params_from_json(const std::string& text);

}  // namespace fgt
