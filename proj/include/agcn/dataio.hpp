#pragma once

// Point-cloud file formats (text and binary), dataset manifests, and the
// synthetic shape generators used for desk-scale training runs.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "agcn/geometry.hpp"

namespace agcn::dataio {

enum class CloudFormat { text, binary };

geometry::PointCloud load_point_cloud(const std::string& path, CloudFormat format);
void save_point_cloud(const geometry::PointCloud& cloud, const std::string& path,
                      CloudFormat format);

struct ManifestEntry {
  std::string path;
  int category = 0;
  std::string split;  // train | val | test
};

struct DatasetManifest {
  std::vector<std::string> category_names;
  std::map<int, std::vector<int>> part_sets;  // category -> part ids (segmentation)
  std::vector<ManifestEntry> entries;

  static DatasetManifest load(const std::string& path);
  void save(const std::string& path) const;
};

struct Sample {
  geometry::PointCloud cloud;
  int category = 0;
  std::string split;
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<std::string> category_names;
  std::map<int, std::vector<int>> part_sets;

  Dataset split(const std::string& tag) const;
  int size() const { return static_cast<int>(samples.size()); }
};

// Loads every cloud referenced by a manifest (paths resolved relative to the
// manifest's directory); format inferred from the file extension (.apt text,
// .apb binary).
Dataset load_dataset(const std::string& manifest_path);

// Writes every sample to out_dir plus a manifest.txt; returns the manifest
// path.
std::string write_dataset(const Dataset& dataset, const std::string& out_dir, CloudFormat format);

// ---------------------------------------------------------------------------
// Synthetic shapes

enum class ShapeFamily { sphere, box, cylinder, torus, plane_pair };
enum class SegShapeFamily { capped_cylinder, box_with_handle };

struct SyntheticSpec {
  ShapeFamily family = ShapeFamily::sphere;
  int points = 512;
  double noise_sigma = 0.01;
};

struct SegSyntheticSpec {
  SegShapeFamily family = SegShapeFamily::capped_cylinder;
  int points = 4096;
  double noise_sigma = 0.005;
};

// Uniform surface samples with analytic normals as channels, Gaussian noise
// along the normal, per-sample random scale in [0.8, 1.2] and z-rotation.
// The first 80% of each class goes to the train split, the rest to val.
Dataset synth_classification_dataset(const std::vector<SyntheticSpec>& specs, int per_class,
                                     std::uint64_t seed);

// Multi-part shapes with per-point part labels (global dense part ids) and a
// category -> part-set map.
Dataset synth_segmentation_dataset(const std::vector<SegSyntheticSpec>& specs, int per_class,
                                   std::uint64_t seed);

// Parses a synthesis spec file (key=value) and materializes the dataset.
// Keys: kind=classification|segmentation, families=comma list, points,
// noise_sigma, per_class, seed.
Dataset synth_from_spec_file(const std::string& spec_path);

}  // namespace agcn::dataio
