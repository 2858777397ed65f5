#include "avuseg/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace avuseg {

namespace {

struct Ellipse {
  double cx, cy, rx, ry, rot;
  // Annotation jitter: radial offset jitter * sin(k*phi + phase).
  double jitter_k, jitter_phase;
};

// Elliptical radius: 1.0 on the boundary.
double ell_radius(const Ellipse& e, double x, double y) {
  const double dx = x - e.cx, dy = y - e.cy;
  const double c = std::cos(e.rot), s = std::sin(e.rot);
  const double u = (dx * c + dy * s) / e.rx;
  const double v = (-dx * s + dy * c) / e.ry;
  return std::sqrt(u * u + v * v);
}

double ell_phi(const Ellipse& e, double x, double y) {
  return std::atan2(y - e.cy, x - e.cx);
}

}  // namespace

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i)
    if (splits[i] == s) out.push_back(i);
  return out;
}

Dataset generate(const DatasetSpec& spec) {
  if (spec.size < 16 || spec.size % 4 != 0)
    throw DomainError("dataset: size must be >= 16 and divisible by 4");
  if (spec.slices < 1) throw DomainError("dataset: slices must be >= 1");
  if (spec.num_classes < 2) throw DomainError("dataset: need >= 2 classes");
  if (spec.num_scans < 1) throw DomainError("dataset: need >= 1 scan");
  if (spec.train + spec.val + spec.test != spec.num_scans)
    throw DomainError("dataset: split sizes must sum to num_scans");

  Dataset ds;
  ds.spec = spec;
  const std::int64_t S = spec.size, Z = spec.slices, C = spec.num_classes;
  const Dims3 dims{S, S, Z};

  for (std::int64_t scan = 0; scan < spec.num_scans; ++scan) {
    Rng rng(substream_seed(spec.seed, static_cast<std::uint64_t>(scan)));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // One elliptical structure per foreground class; geometry is shared
    // between the ID scan and any OOD re-generation with the same seed.
    std::vector<Ellipse> shapes;
    for (std::int64_t k = 1; k < C; ++k) {
      Ellipse e;
      e.cx = S * (0.25 + 0.5 * unif(rng));
      e.cy = S * (0.25 + 0.5 * unif(rng));
      e.rx = spec.shape_scale * S * (0.10 + 0.06 * unif(rng));
      e.ry = spec.shape_scale * S * (0.10 + 0.06 * unif(rng));
      e.rot = 2.0 * M_PI * unif(rng);
      e.jitter_k = 2.0 + std::floor(3.0 * unif(rng));
      e.jitter_phase = 2.0 * M_PI * unif(rng);
      shapes.push_back(e);
    }
    // Low-frequency illumination bias direction.
    const double bias_angle = 2.0 * M_PI * unif(rng);
    const double bias_amp = 0.04 + 0.04 * unif(rng);

    std::vector<std::uint8_t> geom(dims.voxels(), 0);
    std::vector<std::uint8_t> ann(dims.voxels(), 0);
    std::vector<double> img(dims.voxels());

    for (std::int64_t z = 0; z < Z; ++z)
      for (std::int64_t y = 0; y < S; ++y)
        for (std::int64_t x = 0; x < S; ++x) {
          const std::int64_t idx = voxel_index(dims, x, y, z);
          std::uint8_t g = 0, a = 0;
          for (std::int64_t k = 1; k < C; ++k) {
            const Ellipse& e = shapes[k - 1];
            const double rho = ell_radius(e, x, y);
            if (rho <= 1.0) g = static_cast<std::uint8_t>(k);
            // Annotation boundary wobbles radially (in voxels).
            const double rmean = 0.5 * (e.rx + e.ry);
            const double off =
                spec.jitter *
                std::sin(e.jitter_k * ell_phi(e, x, y) + e.jitter_phase) /
                rmean;
            if (rho <= 1.0 + off) a = static_cast<std::uint8_t>(k);
          }
          geom[idx] = g;
          ann[idx] = a;

          const double base =
              g == 0 ? 0.18
                     : 0.30 + 0.35 * static_cast<double>(g) /
                                  static_cast<double>(C - 1);
          const double bias =
              bias_amp * ((x * std::cos(bias_angle) + y * std::sin(bias_angle)) /
                              static_cast<double>(S) -
                          0.5);
          const double v = base + bias + spec.intensity_shift +
                           spec.texture_noise * gauss(rng);
          img[idx] = std::clamp(v, 0.0, 1.0);
        }

    Scan s{"scan" + std::string(scan < 10 ? "0" : "") + std::to_string(scan),
           ScalarVolume(dims, std::move(img)),
           LabelVolume(dims, C, std::move(geom)),
           LabelVolume(dims, C, std::move(ann))};
    ds.scans.push_back(std::move(s));
    ds.splits.push_back(scan < spec.train            ? Split::Train
                        : scan < spec.train + spec.val ? Split::Val
                                                       : Split::Test);
  }
  return ds;
}

namespace {

nlohmann::json spec_to_json(const DatasetSpec& s) {
  return {{"num_scans", s.num_scans}, {"size", s.size},
          {"slices", s.slices},       {"num_classes", s.num_classes},
          {"jitter", s.jitter},       {"texture_noise", s.texture_noise},
          {"intensity_shift", s.intensity_shift},
          {"shape_scale", s.shape_scale},
          {"seed", s.seed},           {"train", s.train},
          {"val", s.val},             {"test", s.test}};
}

DatasetSpec spec_from_json(const nlohmann::json& j) {
  DatasetSpec s;
  s.num_scans = j.at("num_scans").get<std::int64_t>();
  s.size = j.at("size").get<std::int64_t>();
  s.slices = j.at("slices").get<std::int64_t>();
  s.num_classes = j.at("num_classes").get<std::int64_t>();
  s.jitter = j.at("jitter").get<double>();
  s.texture_noise = j.at("texture_noise").get<double>();
  s.intensity_shift = j.at("intensity_shift").get<double>();
  s.shape_scale = j.at("shape_scale").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.train = j.at("train").get<std::int64_t>();
  s.val = j.at("val").get<std::int64_t>();
  s.test = j.at("test").get<std::int64_t>();
  return s;
}

std::string split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  throw DomainError("bad split enum");
}

Split split_from_name(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw IoInvariant("unknown split name: " + s);
}

}  // namespace

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "avuseg-dataset";
  manifest["version"] = 1;
  manifest["spec"] = spec_to_json(ds.spec);
  nlohmann::json scans = nlohmann::json::array();
  for (std::size_t i = 0; i < ds.scans.size(); ++i) {
    const Scan& s = ds.scans[i];
    const std::string img = s.id + "_image.uevol";
    const std::string geo = s.id + "_geometry.uevol";
    const std::string annf = s.id + "_annotation.uevol";
    write_volume(s.image, dir / img);
    write_volume(s.geometry, dir / geo);
    write_volume(s.annotation, dir / annf);
    scans.push_back({{"id", s.id},
                     {"split", split_name(ds.splits[i])},
                     {"image", img},
                     {"geometry", geo},
                     {"annotation", annf}});
  }
  manifest["scans"] = std::move(scans);
  const auto tmp = dir / "manifest.json.tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    f << manifest.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, dir / "manifest.json");
}

Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream f(dir / "manifest.json");
  if (!f) throw IoError("cannot open dataset manifest in " + dir.string());
  nlohmann::json manifest;
  f >> manifest;
  if (manifest.value("format", "") != "avuseg-dataset")
    throw IoInvariant("not a dataset manifest: " + dir.string());
  Dataset ds;
  ds.spec = spec_from_json(manifest.at("spec"));
  for (const auto& e : manifest.at("scans")) {
    Scan s{e.at("id").get<std::string>(),
           read_scalar_volume(dir / e.at("image").get<std::string>()),
           read_label_volume(dir / e.at("geometry").get<std::string>()),
           read_label_volume(dir / e.at("annotation").get<std::string>())};
    ds.scans.push_back(std::move(s));
    ds.splits.push_back(split_from_name(e.at("split").get<std::string>()));
  }
  return ds;
}

}  // namespace avuseg
