#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "avuseg/volumes.hpp"

// Deterministic synthetic segmentation scans: class-dependent intensities
// and textures over elliptical structures, a jittered annotation variant
// emulating inter-observer boundary slivers, and OOD shift knobs. The same
// spec and seed always generate bit-identical data.

namespace avuseg {

struct DatasetSpec {
  std::int64_t num_scans = 48;
  std::int64_t size = 64;    // square slices
  std::int64_t slices = 1;   // Z extent per scan
  std::int64_t num_classes = 2;  // 2 or 6 presets
  double jitter = 1.5;           // annotation boundary jitter, voxels
  double texture_noise = 0.08;
  // OOD knobs; zero/one for in-distribution data.
  double intensity_shift = 0.0;
  double shape_scale = 1.0;
  std::uint64_t seed = 1;
  std::int64_t train = 33, val = 5, test = 10;
};

struct Scan {
  std::string id;
  ScalarVolume image;
  LabelVolume geometry;    // clean generative labels
  LabelVolume annotation;  // jittered "gold standard" used as gt
};

enum class Split { Train, Val, Test };

struct Dataset {
  DatasetSpec spec;
  std::vector<Scan> scans;
  std::vector<Split> splits;  // parallel to scans

  std::vector<std::size_t> indices(Split s) const;
};

Dataset generate(const DatasetSpec& spec);

// manifest.json + UEVOL1 volumes per scan.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace avuseg
