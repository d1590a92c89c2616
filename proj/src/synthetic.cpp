#include "fgt/data/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "fgt/ops/elementwise.hpp"
#include "json.hpp"

namespace fgt {

namespace {

using json = nlohmann::json;

constexpr std::pair<Primitive, std::string_view> kPrimitiveNames[] = {
    {Primitive::Disk, "disk"}, {Primitive::Ring, "ring"}, {Primitive::Square, "square"},
    {Primitive::Triangle, "triangle"}, {Primitive::HBar, "hbar"}, {Primitive::VBar, "vbar"},
    {Primitive::Cross, "cross"},
};

double box(double x, double y, double hx, double hy) { return std::max(std::abs(x) - hx, std::abs(y) - hy); }

// Signed distance (negative inside) of a primitive of radius r at local coordinates (x, y).
double signed_distance(Primitive shape, double x, double y, double r) {
  switch (shape) {
    case Primitive::Disk:
      return std::hypot(x, y) - r;
    case Primitive::Ring:
      return std::abs(std::hypot(x, y) - 0.72 * r) - 0.24 * r;
    case Primitive::Square:
      return box(x, y, 0.8 * r, 0.8 * r);
    case Primitive::Triangle: {
      // Equilateral, apex up (image y grows downwards); inradius r/2.
      double d = -1e300;
      for (double angle : {90.0, 210.0, 330.0}) {
        const double a = angle * std::numbers::pi / 180.0;
        d = std::max(d, std::cos(a) * x - std::sin(a) * y - 0.5 * r);
      }
      return d;
    }
    case Primitive::HBar:
      return box(x, y, r, 0.3 * r);
    case Primitive::VBar:
      return box(x, y, 0.3 * r, r);
    case Primitive::Cross:
      return std::min(box(x, y, r, 0.25 * r), box(x, y, 0.25 * r, r));
  }
  return 1e300;
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform_unit(rng); }

std::mt19937_64 keyed_rng(std::uint64_t seed, std::uint64_t key) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32), 0x5e7du};
  return std::mt19937_64(seq);
}

}  // namespace

std::string_view to_string(Primitive p) {
  for (const auto& [k, n] : kPrimitiveNames)
    if (k == p) return n;
  return "?";
}

Primitive primitive_from_string(std::string_view name) {
  for (const auto& [k, n] : kPrimitiveNames)
    if (n == name) return k;
  throw ConfigError("unknown primitive '" + std::string(name) + "'");
}

void validate(const DomainParams& p) {
  if (p.subjects < 1) throw ConfigError("domain: subjects must be >= 1");
  if (!(p.noise_sigma >= 0.0) || !(p.contrast > 0.0) || !(p.texture_frequency >= 0.0))
    throw ConfigError("domain: noise_sigma >= 0, contrast > 0 and texture_frequency >= 0 required");
  if (!(p.position_jitter >= 0.0) || !(p.scale_jitter >= 0.0 && p.scale_jitter < 1.0) || !(p.subject_brightness >= 0.0))
    throw ConfigError("domain: jitter and subject offsets must be non-negative (scale_jitter < 1)");
  for (std::size_t i = 0; i < p.prototypes.size(); ++i) {
    if (!(p.prototypes[i].scale > 0.0)) throw ConfigError("domain: prototype scale must be positive");
    for (std::size_t j = 0; j < i; ++j)
      if (p.prototypes[i] == p.prototypes[j])
        throw ConfigError("domain: prototypes " + std::to_string(j) + " and " + std::to_string(i) + " are identical");
  }
}

DomainParams default_source_domain() {
  DomainParams p;
  p.prototypes = {{
      {Primitive::Disk, 22.0, 22.0, 11.0},
      {Primitive::Ring, 26.0, 22.0, 12.0},
      {Primitive::Square, 22.0, 26.0, 10.0},
      {Primitive::Triangle, 24.0, 25.0, 13.0},
      {Primitive::HBar, 24.0, 22.0, 13.0},
      {Primitive::VBar, 26.0, 24.0, 13.0},
      {Primitive::Cross, 24.0, 24.0, 12.0},
  }};
  return p;
}

DomainParams shifted_domain(const DomainParams& base, double m) {
  DomainParams p = base;
  for (auto& proto : p.prototypes) {
    proto.cx += 6.0 * m;
    proto.cy += 4.0 * m;
    proto.scale *= 1.0 - 0.25 * m;
  }
  p.rotation += 75.0 * m;
  p.texture_frequency += 8.0 * m;
  p.texture_orientation += 60.0 * m;
  p.background += 0.4 * m;
  p.contrast *= 1.0 - 0.25 * m;
  p.noise_sigma += 0.05 * m;
  return p;
}

Dataset gen_synthetic_domain(const DomainParams& params, std::size_t n_per_class, std::uint64_t seed,
                             const std::string& name) {
  validate(params);
  const auto classes = params.prototypes.size();
  std::vector<double> subject_offset(static_cast<std::size_t>(params.subjects));
  {
    auto rng = keyed_rng(seed, 0xfaceull);
    for (auto& o : subject_offset) o = uniform(rng, -params.subject_brightness, params.subject_brightness);
  }

  Dataset ds{name, {}, kClassNames};
  ds.samples.reserve(classes * n_per_class);
  const double deg = std::numbers::pi / 180.0;
  const double tex_cos = std::cos(params.texture_orientation * deg), tex_sin = std::sin(params.texture_orientation * deg);
  for (std::size_t i = 0; i < n_per_class; ++i) {
    const std::size_t subject = i * static_cast<std::size_t>(params.subjects) / std::max<std::size_t>(n_per_class, 1);
    for (std::size_t c = 0; c < classes; ++c) {
      auto rng = keyed_rng(seed, (static_cast<std::uint64_t>(i) << 8) | c);
      std::normal_distribution<double> noise(0.0, 1.0);
      const Prototype& proto = params.prototypes[c];
      const double cx = proto.cx + uniform(rng, -params.position_jitter, params.position_jitter);
      const double cy = proto.cy + uniform(rng, -params.position_jitter, params.position_jitter);
      const double r = proto.scale * (1.0 + uniform(rng, -params.scale_jitter, params.scale_jitter));
      const double angle = (params.rotation + uniform(rng, -8.0, 8.0)) * deg;
      const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      const double ca = std::cos(angle), sa = std::sin(angle);
      const double level = params.background + params.brightness + subject_offset[subject];

      Sample s;
      s.image = Tensor({1, kImageSide, kImageSide});
      s.label = static_cast<int>(c);
      s.subject_id = name + "-s" + std::to_string(subject);
      s.origin = name;
      for (Index y = 0; y < kImageSide; ++y)
        for (Index x = 0; x < kImageSide; ++x) {
          const double dx = double(x) + 0.5 - cx, dy = double(y) + 0.5 - cy;
          // Rotate the sampling point into the prototype frame.
          const double lx = ca * dx + sa * dy, ly = -sa * dx + ca * dy;
          const double mask = std::clamp(0.5 - signed_distance(proto.shape, lx, ly, r), 0.0, 1.0);
          const double u = (double(x) * tex_cos + double(y) * tex_sin) / double(kImageSide);
          const double texture = 0.65 + 0.35 * std::sin(2.0 * std::numbers::pi * params.texture_frequency * u + phase);
          const double v = level + params.contrast * mask * texture + params.noise_sigma * noise(rng);
          s.image[y * kImageSide + x] = std::clamp(v, 0.0, 1.0);
        }
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

std::string domain_params_to_json(const DomainParams& p) {
  json protos = json::array();
  for (const auto& proto : p.prototypes)
    protos.push_back({{"shape", std::string(to_string(proto.shape))},
                      {"cx", proto.cx},
                      {"cy", proto.cy},
                      {"scale", proto.scale}});
  json j{{"prototypes", protos},
         {"texture_frequency", p.texture_frequency},
         {"texture_orientation", p.texture_orientation},
         {"background", p.background},
         {"noise_sigma", p.noise_sigma},
         {"contrast", p.contrast},
         {"brightness", p.brightness},
         {"rotation", p.rotation},
         {"position_jitter", p.position_jitter},
         {"scale_jitter", p.scale_jitter},
         {"subject_brightness", p.subject_brightness},
         {"subjects", p.subjects}};
  return j.dump(2);
}

DomainParams domain_params_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("domain params: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("domain params: expected a JSON object");
  DomainParams p = default_source_domain();
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "prototypes") {
        if (!value.is_array() || value.size() != 7) throw ConfigError("domain params: 'prototypes' needs 7 entries");
        for (std::size_t i = 0; i < 7; ++i) {
          for (const auto& [pk, pv] : value[i].items())
            if (pk != "shape" && pk != "cx" && pk != "cy" && pk != "scale")
              throw ConfigError("domain params: unknown prototype key '" + pk + "'");
          auto& proto = p.prototypes[i];
          proto.shape = primitive_from_string(value[i].value("shape", std::string(to_string(proto.shape))));
          proto.cx = value[i].value("cx", proto.cx);
          proto.cy = value[i].value("cy", proto.cy);
          proto.scale = value[i].value("scale", proto.scale);
        }
      } else if (key == "texture_frequency") p.texture_frequency = value.get<double>();
      else if (key == "texture_orientation") p.texture_orientation = value.get<double>();
      else if (key == "background") p.background = value.get<double>();
      else if (key == "noise_sigma") p.noise_sigma = value.get<double>();
      else if (key == "contrast") p.contrast = value.get<double>();
      else if (key == "brightness") p.brightness = value.get<double>();
      else if (key == "rotation") p.rotation = value.get<double>();
      else if (key == "position_jitter") p.position_jitter = value.get<double>();
      else if (key == "scale_jitter") p.scale_jitter = value.get<double>();
      else if (key == "subject_brightness") p.subject_brightness = value.get<double>();
      else if (key == "subjects") p.subjects = value.get<int>();
      else throw ConfigError("domain params: unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("domain params: ") + e.what());
  }
  validate(p);
  return p;
}

DomainParams load_domain_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open domain params " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return domain_params_from_json(ss.str());
}

void save_domain_params(const DomainParams& params, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << domain_params_to_json(params) << '\n';
}

}  // namespace fgt
