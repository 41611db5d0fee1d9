#include "agcn/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "agcn/common.hpp"

namespace fs = std::filesystem;

namespace agcn::dataio {

using geometry::Point;
using geometry::PointCloud;

// ---------------------------------------------------------------------------
// Text format: "AGCNPTS <N> <C> <has_labels>" then N rows of 3+C reals and an
// optional integer label. Binary format: "AGCNPBIN", int32 version, N, C,
// has_labels, then float32 coords/channels and int32 labels.

namespace {

constexpr char kBinaryMagic[] = "AGCNPBIN";

void check_finite_row(const std::vector<double>& vals, const std::string& path, long line) {
  for (double v : vals) {
    if (!std::isfinite(v)) throw ParseError(path, line, "non-finite value");
  }
}

PointCloud load_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path, 1, "missing header");
  std::istringstream header(line);
  std::string magic;
  long n = -1, c = -1, has_labels = -1;
  header >> magic >> n >> c >> has_labels;
  if (magic != "AGCNPTS" || header.fail() || n < 1 || c < 0 ||
      (has_labels != 0 && has_labels != 1)) {
    throw ParseError(path, 1, "malformed header, expected 'AGCNPTS N C has_labels'");
  }

  PointCloud cloud;
  cloud.channel_count = static_cast<int>(c);
  cloud.coords.reserve(n);
  cloud.channels.reserve(n * c);
  if (has_labels) cloud.labels.reserve(n);

  for (long row = 0; row < n; ++row) {
    if (!std::getline(in, line)) {
      throw ParseError(path, row + 2, "expected data row " + std::to_string(row + 1) + " of " +
                                          std::to_string(n));
    }
    std::istringstream ss(line);
    std::vector<double> vals(3 + c);
    for (double& v : vals) ss >> v;
    long label = 0;
    if (has_labels) ss >> label;
    if (ss.fail()) throw ParseError(path, row + 2, "malformed data row");
    check_finite_row(vals, path, row + 2);
    cloud.coords.push_back({vals[0], vals[1], vals[2]});
    for (long i = 0; i < c; ++i) cloud.channels.push_back(vals[3 + i]);
    if (has_labels) {
      if (label < 0) throw ParseError(path, row + 2, "negative label");
      cloud.labels.push_back(static_cast<int>(label));
    }
  }
  cloud.validate();
  return cloud;
}

void save_text(const PointCloud& cloud, const std::string& path) {
  std::FILE* out = std::fopen(path.c_str(), "w");
  if (!out) throw std::runtime_error("save_point_cloud: cannot open " + path);
  std::fprintf(out, "AGCNPTS %d %d %d\n", cloud.size(), cloud.channel_count,
               cloud.has_labels() ? 1 : 0);
  for (int i = 0; i < cloud.size(); ++i) {
    std::fprintf(out, "%.9g %.9g %.9g", cloud.coords[i][0], cloud.coords[i][1],
                 cloud.coords[i][2]);
    for (int ch = 0; ch < cloud.channel_count; ++ch) {
      std::fprintf(out, " %.9g", cloud.channel_row(i)[ch]);
    }
    if (cloud.has_labels()) std::fprintf(out, " %d", cloud.labels[i]);
    std::fprintf(out, "\n");
  }
  if (std::fclose(out) != 0) throw std::runtime_error("save_point_cloud: write failed " + path);
}

PointCloud load_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, 0, "cannot open file");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kBinaryMagic, 8) != 0) {
    throw ParseError(path, 0, "bad magic, expected AGCNPBIN");
  }
  std::int32_t version = 0, n = 0, c = 0, has_labels = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&n), 4);
  in.read(reinterpret_cast<char*>(&c), 4);
  in.read(reinterpret_cast<char*>(&has_labels), 4);
  if (!in || version != 1 || n < 1 || c < 0 || (has_labels != 0 && has_labels != 1)) {
    throw ParseError(path, 0, "malformed binary header");
  }
  PointCloud cloud;
  cloud.channel_count = c;
  std::vector<float> coords(static_cast<std::size_t>(n) * 3);
  in.read(reinterpret_cast<char*>(coords.data()), 4 * coords.size());
  std::vector<float> channels(static_cast<std::size_t>(n) * c);
  in.read(reinterpret_cast<char*>(channels.data()), 4 * channels.size());
  std::vector<std::int32_t> labels;
  if (has_labels) {
    labels.resize(n);
    in.read(reinterpret_cast<char*>(labels.data()), 4 * labels.size());
  }
  if (!in) throw ParseError(path, 0, "truncated binary payload");
  for (std::int32_t i = 0; i < n; ++i) {
    cloud.coords.push_back({coords[i * 3], coords[i * 3 + 1], coords[i * 3 + 2]});
  }
  cloud.channels.assign(channels.begin(), channels.end());
  cloud.labels.assign(labels.begin(), labels.end());
  cloud.validate();
  return cloud;
}

void save_binary(const PointCloud& cloud, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_point_cloud: cannot open " + path);
  out.write(kBinaryMagic, 8);
  std::int32_t version = 1, n = cloud.size(), c = cloud.channel_count,
               has_labels = cloud.has_labels() ? 1 : 0;
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&n), 4);
  out.write(reinterpret_cast<const char*>(&c), 4);
  out.write(reinterpret_cast<const char*>(&has_labels), 4);
  for (const Point& p : cloud.coords) {
    for (double v : p) {
      float f = static_cast<float>(v);
      out.write(reinterpret_cast<const char*>(&f), 4);
    }
  }
  for (double v : cloud.channels) {
    float f = static_cast<float>(v);
    out.write(reinterpret_cast<const char*>(&f), 4);
  }
  for (int l : cloud.labels) {
    std::int32_t v = l;
    out.write(reinterpret_cast<const char*>(&v), 4);
  }
  if (!out) throw std::runtime_error("save_point_cloud: write failed " + path);
}

}  // namespace

PointCloud load_point_cloud(const std::string& path, CloudFormat format) {
  return format == CloudFormat::text ? load_text(path) : load_binary(path);
}

void save_point_cloud(const PointCloud& cloud, const std::string& path, CloudFormat format) {
  cloud.validate();
  if (format == CloudFormat::text) {
    save_text(cloud, path);
  } else {
    save_binary(cloud, path);
  }
}

// ---------------------------------------------------------------------------
// Manifest

DatasetManifest DatasetManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open manifest");
  DatasetManifest m;
  std::string line;
  long lineno = 0;
  auto next = [&](const char* what) {
    if (!std::getline(in, line)) throw ParseError(path, lineno + 1, std::string("expected ") + what);
    ++lineno;
    return line;
  };
  if (next("AGCNMANIFEST") != "AGCNMANIFEST") throw ParseError(path, lineno, "bad manifest magic");
  std::istringstream cat_line(next("categories line"));
  std::string word;
  long ncat = -1;
  cat_line >> word >> ncat;
  if (word != "categories" || cat_line.fail() || ncat < 1) {
    throw ParseError(path, lineno, "expected 'categories N'");
  }
  for (long i = 0; i < ncat; ++i) m.category_names.push_back(next("category name"));
  while (next("end_header") != "end_header") {
    std::istringstream ss(line);
    ss >> word;
    if (word != "parts") throw ParseError(path, lineno, "expected 'parts' or 'end_header'");
    int cat = -1;
    ss >> cat;
    if (ss.fail() || cat < 0 || cat >= ncat) throw ParseError(path, lineno, "bad parts category");
    std::vector<int> parts;
    int p;
    while (ss >> p) parts.push_back(p);
    m.part_sets[cat] = parts;
  }
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    ManifestEntry e;
    std::string cat_str;
    if (!std::getline(ss, e.path, '\t') || !std::getline(ss, cat_str, '\t') ||
        !std::getline(ss, e.split)) {
      throw ParseError(path, lineno, "expected path<TAB>category<TAB>split");
    }
    e.category = std::stoi(cat_str);
    if (e.category < 0 || e.category >= ncat) throw ParseError(path, lineno, "category out of range");
    m.entries.push_back(std::move(e));
  }
  return m;
}

void DatasetManifest::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("DatasetManifest: cannot open " + path);
  out << "AGCNMANIFEST\n";
  out << "categories " << category_names.size() << "\n";
  for (const auto& name : category_names) out << name << "\n";
  for (const auto& [cat, parts] : part_sets) {
    out << "parts " << cat;
    for (int p : parts) out << " " << p;
    out << "\n";
  }
  out << "end_header\n";
  for (const auto& e : entries) {
    out << e.path << "\t" << e.category << "\t" << e.split << "\n";
  }
  if (!out) throw std::runtime_error("DatasetManifest: write failed " + path);
}

Dataset Dataset::split(const std::string& tag) const {
  Dataset out;
  out.category_names = category_names;
  out.part_sets = part_sets;
  for (const auto& s : samples) {
    if (s.split == tag) out.samples.push_back(s);
  }
  return out;
}

Dataset load_dataset(const std::string& manifest_path) {
  DatasetManifest m = DatasetManifest::load(manifest_path);
  fs::path base = fs::path(manifest_path).parent_path();
  Dataset ds;
  ds.category_names = m.category_names;
  ds.part_sets = m.part_sets;
  for (const auto& e : m.entries) {
    fs::path p = fs::path(e.path).is_absolute() ? fs::path(e.path) : base / e.path;
    CloudFormat fmt = p.extension() == ".apt" ? CloudFormat::text : CloudFormat::binary;
    Sample s;
    s.cloud = load_point_cloud(p.string(), fmt);
    s.category = e.category;
    s.split = e.split;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

std::string write_dataset(const Dataset& dataset, const std::string& out_dir, CloudFormat format) {
  fs::create_directories(out_dir);
  DatasetManifest m;
  m.category_names = dataset.category_names;
  m.part_sets = dataset.part_sets;
  const char* ext = format == CloudFormat::text ? ".apt" : ".apb";
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const Sample& s = dataset.samples[i];
    char name[64];
    std::snprintf(name, sizeof(name), "cloud_%05zu%s", i, ext);
    save_point_cloud(s.cloud, (fs::path(out_dir) / name).string(), format);
    m.entries.push_back({name, s.category, s.split});
  }
  std::string manifest_path = (fs::path(out_dir) / "manifest.txt").string();
  m.save(manifest_path);
  return manifest_path;
}

// ---------------------------------------------------------------------------
// Synthetic shapes

namespace {

constexpr double kPi = std::numbers::pi;

struct SurfaceSample {
  Point p;
  Point normal;
  int part = 0;  // local part id within the shape
};

// One face of a box with outward normal along +/- axis.
SurfaceSample sample_box_surface(double hx, double hy, double hz, Rng& rng) {
  double ax = 4 * hy * hz, ay = 4 * hx * hz, az = 4 * hx * hy;
  double pick = rng.uniform(0.0, 2 * (ax + ay + az));
  SurfaceSample s;
  double u, v;
  if (pick < 2 * ax) {
    double sign = pick < ax ? 1.0 : -1.0;
    u = rng.uniform(-hy, hy);
    v = rng.uniform(-hz, hz);
    s.p = {sign * hx, u, v};
    s.normal = {sign, 0, 0};
  } else if (pick < 2 * ax + 2 * ay) {
    double sign = pick < 2 * ax + ay ? 1.0 : -1.0;
    u = rng.uniform(-hx, hx);
    v = rng.uniform(-hz, hz);
    s.p = {u, sign * hy, v};
    s.normal = {0, sign, 0};
  } else {
    double sign = pick < 2 * ax + 2 * ay + az ? 1.0 : -1.0;
    u = rng.uniform(-hx, hx);
    v = rng.uniform(-hy, hy);
    s.p = {u, v, sign * hz};
    s.normal = {0, 0, sign};
  }
  return s;
}

SurfaceSample sample_shape(ShapeFamily family, Rng& rng) {
  SurfaceSample s;
  switch (family) {
    case ShapeFamily::sphere: {
      double x = rng.gaussian(1.0), y = rng.gaussian(1.0), z = rng.gaussian(1.0);
      double norm = std::sqrt(x * x + y * y + z * z);
      if (norm < 1e-12) norm = 1.0;
      s.normal = {x / norm, y / norm, z / norm};
      s.p = s.normal;
      break;
    }
    case ShapeFamily::box:
      s = sample_box_surface(0.9, 0.6, 0.45, rng);
      break;
    case ShapeFamily::cylinder: {
      const double r = 0.5, h = 1.6;
      double lateral = 2 * kPi * r * h, cap = kPi * r * r;
      double pick = rng.uniform(0.0, lateral + 2 * cap);
      if (pick < lateral) {
        double theta = rng.uniform(0.0, 2 * kPi);
        double z = rng.uniform(-h / 2, h / 2);
        s.p = {r * std::cos(theta), r * std::sin(theta), z};
        s.normal = {std::cos(theta), std::sin(theta), 0};
      } else {
        double sign = pick < lateral + cap ? 1.0 : -1.0;
        double rr = r * std::sqrt(rng.uniform(0.0, 1.0));
        double theta = rng.uniform(0.0, 2 * kPi);
        s.p = {rr * std::cos(theta), rr * std::sin(theta), sign * h / 2};
        s.normal = {0, 0, sign};
      }
      break;
    }
    case ShapeFamily::torus: {
      const double big = 0.8, small = 0.25;
      double u = rng.uniform(0.0, 2 * kPi);
      double v;
      // Rejection sampling for area-uniform tube angle.
      do {
        v = rng.uniform(0.0, 2 * kPi);
      } while (rng.uniform(0.0, 1.0) > (big + small * std::cos(v)) / (big + small));
      s.p = {(big + small * std::cos(v)) * std::cos(u), (big + small * std::cos(v)) * std::sin(u),
             small * std::sin(v)};
      s.normal = {std::cos(v) * std::cos(u), std::cos(v) * std::sin(u), std::sin(v)};
      break;
    }
    case ShapeFamily::plane_pair: {
      double sign = rng.uniform(0.0, 1.0) < 0.5 ? 1.0 : -1.0;
      s.p = {rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), sign * 0.4};
      s.normal = {0, 0, sign};
      break;
    }
  }
  return s;
}

void apply_pose_and_noise(SurfaceSample& s, double scale, double angle, double sigma, Rng& rng) {
  double c = std::cos(angle), sn = std::sin(angle);
  auto rotate = [&](Point& p) {
    double x = c * p[0] - sn * p[1];
    double y = sn * p[0] + c * p[1];
    p[0] = x;
    p[1] = y;
  };
  rotate(s.p);
  rotate(s.normal);
  for (int d = 0; d < 3; ++d) s.p[d] *= scale;
  double noise = rng.gaussian(sigma);
  for (int d = 0; d < 3; ++d) s.p[d] += s.normal[d] * noise;
}

PointCloud assemble_cloud(const std::vector<SurfaceSample>& samples, bool with_labels,
                          int label_base) {
  PointCloud cloud;
  cloud.channel_count = 3;
  for (const auto& s : samples) {
    cloud.coords.push_back(s.p);
    cloud.channels.push_back(s.normal[0]);
    cloud.channels.push_back(s.normal[1]);
    cloud.channels.push_back(s.normal[2]);
    if (with_labels) cloud.labels.push_back(label_base + s.part);
  }
  return cloud;
}

const char* family_name(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::sphere: return "sphere";
    case ShapeFamily::box: return "box";
    case ShapeFamily::cylinder: return "cylinder";
    case ShapeFamily::torus: return "torus";
    case ShapeFamily::plane_pair: return "plane_pair";
  }
  return "unknown";
}

const char* seg_family_name(SegShapeFamily f) {
  switch (f) {
    case SegShapeFamily::capped_cylinder: return "capped_cylinder";
    case SegShapeFamily::box_with_handle: return "box_with_handle";
  }
  return "unknown";
}

// Part areas for the stratified segmentation sampler.
std::vector<double> seg_part_areas(SegShapeFamily family) {
  switch (family) {
    case SegShapeFamily::capped_cylinder: {
      const double r = 0.5, h = 1.6;
      return {2 * kPi * r * h, kPi * r * r, kPi * r * r};  // lateral, bottom, top
    }
    case SegShapeFamily::box_with_handle: {
      const double hx = 0.6, hy = 0.45, hz = 0.4;
      double box = 8 * (hx * hy + hy * hz + hx * hz);
      const double hr = 0.08, hh = 0.5;
      double handle = 2 * kPi * hr * hh + kPi * hr * hr;  // lateral + top cap
      return {box, handle};
    }
  }
  return {};
}

SurfaceSample sample_seg_part(SegShapeFamily family, int part, Rng& rng) {
  SurfaceSample s;
  s.part = part;
  switch (family) {
    case SegShapeFamily::capped_cylinder: {
      const double r = 0.5, h = 1.6;
      if (part == 0) {
        double theta = rng.uniform(0.0, 2 * kPi);
        double z = rng.uniform(-h / 2, h / 2);
        s.p = {r * std::cos(theta), r * std::sin(theta), z};
        s.normal = {std::cos(theta), std::sin(theta), 0};
      } else {
        double sign = part == 1 ? -1.0 : 1.0;
        double rr = r * std::sqrt(rng.uniform(0.0, 1.0));
        double theta = rng.uniform(0.0, 2 * kPi);
        s.p = {rr * std::cos(theta), rr * std::sin(theta), sign * h / 2};
        s.normal = {0, 0, sign};
      }
      break;
    }
    case SegShapeFamily::box_with_handle: {
      if (part == 0) {
        s = sample_box_surface(0.6, 0.45, 0.4, rng);
        s.part = 0;
      } else {
        const double hr = 0.08, hh = 0.5, base = 0.4;
        double lateral = 2 * kPi * hr * hh, cap = kPi * hr * hr;
        if (rng.uniform(0.0, lateral + cap) < lateral) {
          double theta = rng.uniform(0.0, 2 * kPi);
          double z = base + rng.uniform(0.0, hh);
          s.p = {hr * std::cos(theta), hr * std::sin(theta), z};
          s.normal = {std::cos(theta), std::sin(theta), 0};
        } else {
          double rr = hr * std::sqrt(rng.uniform(0.0, 1.0));
          double theta = rng.uniform(0.0, 2 * kPi);
          s.p = {rr * std::cos(theta), rr * std::sin(theta), base + hh};
          s.normal = {0, 0, 1};
        }
      }
      break;
    }
  }
  return s;
}

std::string split_for(int index, int per_class) {
  int train_count = (per_class * 4) / 5;
  return index < train_count ? "train" : "val";
}

}  // namespace

Dataset synth_classification_dataset(const std::vector<SyntheticSpec>& specs, int per_class,
                                     std::uint64_t seed) {
  Dataset ds;
  for (const auto& spec : specs) ds.category_names.push_back(family_name(spec.family));
  for (std::size_t cat = 0; cat < specs.size(); ++cat) {
    const auto& spec = specs[cat];
    for (int i = 0; i < per_class; ++i) {
      Rng rng(hash_name("cls." + std::to_string(cat) + "." + std::to_string(i), seed));
      double scale = rng.uniform(0.8, 1.2);
      double angle = rng.uniform(0.0, 2 * kPi);
      std::vector<SurfaceSample> pts(spec.points);
      for (auto& p : pts) {
        p = sample_shape(spec.family, rng);
        apply_pose_and_noise(p, scale, angle, spec.noise_sigma, rng);
      }
      Sample s;
      s.cloud = assemble_cloud(pts, /*with_labels=*/false, 0);
      s.category = static_cast<int>(cat);
      s.split = split_for(i, per_class);
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

Dataset synth_segmentation_dataset(const std::vector<SegSyntheticSpec>& specs, int per_class,
                                   std::uint64_t seed) {
  Dataset ds;
  int part_base = 0;
  for (const auto& spec : specs) {
    ds.category_names.push_back(seg_family_name(spec.family));
    int cat = static_cast<int>(ds.category_names.size()) - 1;
    int nparts = static_cast<int>(seg_part_areas(spec.family).size());
    std::vector<int> parts;
    for (int p = 0; p < nparts; ++p) parts.push_back(part_base + p);
    ds.part_sets[cat] = parts;
    part_base += nparts;
  }

  part_base = 0;
  for (std::size_t cat = 0; cat < specs.size(); ++cat) {
    const auto& spec = specs[cat];
    std::vector<double> areas = seg_part_areas(spec.family);
    double total = 0;
    for (double a : areas) total += a;
    // Stratified per-part counts: floor of the area share, remainder to the
    // largest fractional parts.
    std::vector<int> counts(areas.size());
    std::vector<std::pair<double, int>> frac;
    int assigned = 0;
    for (std::size_t p = 0; p < areas.size(); ++p) {
      double exact = spec.points * areas[p] / total;
      counts[p] = static_cast<int>(exact);
      assigned += counts[p];
      frac.push_back({-(exact - counts[p]), static_cast<int>(p)});
    }
    std::sort(frac.begin(), frac.end());
    for (int r = 0; r < spec.points - assigned; ++r) counts[frac[r % frac.size()].second] += 1;

    for (int i = 0; i < per_class; ++i) {
      Rng rng(hash_name("seg." + std::to_string(cat) + "." + std::to_string(i), seed));
      double scale = rng.uniform(0.8, 1.2);
      double angle = rng.uniform(0.0, 2 * kPi);
      std::vector<SurfaceSample> pts;
      pts.reserve(spec.points);
      for (std::size_t p = 0; p < counts.size(); ++p) {
        for (int j = 0; j < counts[p]; ++j) {
          SurfaceSample s = sample_seg_part(spec.family, static_cast<int>(p), rng);
          apply_pose_and_noise(s, scale, angle, spec.noise_sigma, rng);
          pts.push_back(s);
        }
      }
      Sample s;
      s.cloud = assemble_cloud(pts, /*with_labels=*/true, part_base);
      s.category = static_cast<int>(cat);
      s.split = split_for(i, per_class);
      ds.samples.push_back(std::move(s));
    }
    part_base += static_cast<int>(areas.size());
  }
  return ds;
}

Dataset synth_from_spec_file(const std::string& spec_path) {
  KeyValueFile kv = KeyValueFile::load(spec_path);
  std::string kind = kv.require_string("kind");
  int points = static_cast<int>(kv.get_int("points", 512));
  double sigma = kv.get_real("noise_sigma", 0.01);
  int per_class = static_cast<int>(kv.get_int("per_class", 100));
  std::uint64_t seed = static_cast<std::uint64_t>(kv.get_int("seed", 1));
  std::string families = kv.require_string("families");

  std::vector<std::string> names;
  std::stringstream ss(families);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) names.push_back(item);
  }

  if (kind == "classification") {
    std::vector<SyntheticSpec> specs;
    for (const auto& n : names) {
      SyntheticSpec s;
      s.points = points;
      s.noise_sigma = sigma;
      if (n == "sphere") s.family = ShapeFamily::sphere;
      else if (n == "box") s.family = ShapeFamily::box;
      else if (n == "cylinder") s.family = ShapeFamily::cylinder;
      else if (n == "torus") s.family = ShapeFamily::torus;
      else if (n == "plane_pair") s.family = ShapeFamily::plane_pair;
      else throw std::invalid_argument("synth: unknown classification family " + n);
      specs.push_back(s);
    }
    return synth_classification_dataset(specs, per_class, seed);
  }
  if (kind == "segmentation") {
    std::vector<SegSyntheticSpec> specs;
    for (const auto& n : names) {
      SegSyntheticSpec s;
      s.points = points;
      s.noise_sigma = sigma;
      if (n == "capped_cylinder") s.family = SegShapeFamily::capped_cylinder;
      else if (n == "box_with_handle") s.family = SegShapeFamily::box_with_handle;
      else throw std::invalid_argument("synth: unknown segmentation family " + n);
      specs.push_back(s);
    }
    return synth_segmentation_dataset(specs, per_class, seed);
  }
  throw std::invalid_argument("synth: kind must be classification or segmentation");
}

}  // namespace dataio
