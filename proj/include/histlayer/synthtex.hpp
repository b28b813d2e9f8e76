#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "histlayer/rng.hpp"

namespace histlayer {

// 9-class structural x statistical texture benchmark. Each image is a fixed
// structural mask filled with intensities drawn from one of three laws whose
// means all sit at 128; off-structure pixels are 0, so telling the statistical
// classes apart requires the full distribution rather than the mean.

enum class Structural { kCheckerboard, kCross, kStripes };
enum class Statistical { kBinomial, kMultinomial, kConstant };
enum class Split { kTrain, kVal, kTest };

inline int joint_class(Structural s, Statistical t) {
  return static_cast<int>(s) * 3 + static_cast<int>(t);
}

inline const char* structural_to_string(Structural s) {
  switch (s) {
    case Structural::kCheckerboard: return "checkerboard";
    case Structural::kCross: return "cross";
    case Structural::kStripes: return "stripes";
  }
  throw std::logic_error("structural_to_string: unknown kind");
}

inline Structural structural_from_string(const std::string& s) {
  if (s == "checkerboard") return Structural::kCheckerboard;
  if (s == "cross") return Structural::kCross;
  if (s == "stripes") return Structural::kStripes;
  throw std::invalid_argument("unknown structural token '" + s + "'");
}

inline const char* statistical_to_string(Statistical s) {
  switch (s) {
    case Statistical::kBinomial: return "binomial";
    case Statistical::kMultinomial: return "multinomial";
    case Statistical::kConstant: return "constant";
  }
  throw std::logic_error("statistical_to_string: unknown kind");
}

inline Statistical statistical_from_string(const std::string& s) {
  if (s == "binomial") return Statistical::kBinomial;
  if (s == "multinomial") return Statistical::kMultinomial;
  if (s == "constant") return Statistical::kConstant;
  throw std::invalid_argument("unknown statistical token '" + s + "'");
}

inline const char* split_to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  throw std::logic_error("split_to_string: unknown split");
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw std::invalid_argument("unknown split token '" + s + "'");
}

struct SyntheticSample {
  int size = 0;                      // square side
  std::vector<std::uint8_t> pixels;  // row-major, size*size
  Structural structural = Structural::kCheckerboard;
  Statistical statistical = Statistical::kBinomial;
  int joint = 0;
  Split split = Split::kTrain;

  bool operator==(const SyntheticSample&) const = default;
};

struct DatasetManifest {
  int image_size = 0;
  int per_class = 0;
  std::uint64_t seed = 0;
  struct Entry {
    std::string path;
    Structural structural;
    Statistical statistical;
    int joint;
    Split split;
    bool operator==(const Entry&) const = default;
  };
  std::vector<Entry> entries;

  bool operator==(const DatasetManifest&) const = default;
};

struct Dataset {
  std::vector<SyntheticSample> samples;
  DatasetManifest manifest;

  bool operator==(const Dataset&) const = default;
};

// Checkerboard: (i+j) even. Cross: center row or column. Stripes: even columns.
inline std::vector<std::uint8_t> structural_mask(Structural kind, int size) {
  if (size < 3 || size % 2 == 0) {
    throw std::invalid_argument("structural_mask: size must be odd and >= 3, got " +
                                std::to_string(size));
  }
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(size) * size, 0);
  const int mid = size / 2;
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      bool on = false;
      switch (kind) {
        case Structural::kCheckerboard: on = (i + j) % 2 == 0; break;
        case Structural::kCross: on = i == mid || j == mid; break;
        case Structural::kStripes: on = j % 2 == 0; break;
      }
      mask[static_cast<std::size_t>(i) * size + j] = on ? 1 : 0;
    }
  }
  return mask;
}

// Binomial: 64 or 192 with p = 1/2. Multinomial: {64, 128, 192} with p = 1/3.
// Constant: always 128.
inline std::vector<std::uint8_t> sample_statistical(Statistical kind, int count, SplitMix64& rng) {
  std::vector<std::uint8_t> out(count);
  for (int i = 0; i < count; ++i) {
    switch (kind) {
      case Statistical::kBinomial: out[i] = rng.below(2) == 0 ? 64 : 192; break;
      case Statistical::kMultinomial: {
        static constexpr std::uint8_t choices[3] = {64, 128, 192};
        out[i] = choices[rng.below(3)];
        break;
      }
      case Statistical::kConstant: out[i] = 128; break;
    }
  }
  return out;
}

// Fills the mask's active cells with the drawn intensities in row-major
// order; everything off-structure stays 0.
inline std::vector<std::uint8_t> compose_image(const std::vector<std::uint8_t>& mask,
                                               const std::vector<std::uint8_t>& intensities) {
  std::size_t active = 0;
  for (std::uint8_t m : mask) active += m != 0;
  if (active != intensities.size()) {
    throw std::invalid_argument("compose_image: " + std::to_string(intensities.size()) +
                                " intensities for " + std::to_string(active) + " active cells");
  }
  std::vector<std::uint8_t> image(mask.size(), 0);
  std::size_t next = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != 0) image[i] = intensities[next++];
  }
  return image;
}

inline constexpr int kSamplesPerClass = 100;
inline constexpr int kTrainPerClass = 70;
inline constexpr int kValPerClass = 10;

// 9 classes x 100 images, stratified 70/10/20 split. Each image draws from
// its own stream seeded by hash64(seed, class, index), so content does not
// depend on generation order.
inline Dataset generate_dataset(int size, std::uint64_t seed) {
  Dataset d;
  d.manifest.image_size = size;
  d.manifest.per_class = kSamplesPerClass;
  d.manifest.seed = seed;
  for (int si = 0; si < 3; ++si) {
    const auto structural = static_cast<Structural>(si);
    const std::vector<std::uint8_t> mask = structural_mask(structural, size);
    int active = 0;
    for (std::uint8_t m : mask) active += m != 0;
    for (int ti = 0; ti < 3; ++ti) {
      const auto statistical = static_cast<Statistical>(ti);
      const int jc = joint_class(structural, statistical);
      for (int idx = 0; idx < kSamplesPerClass; ++idx) {
        SplitMix64 rng(hash64(seed, static_cast<std::uint64_t>(jc), static_cast<std::uint64_t>(idx)));
        SyntheticSample s;
        s.size = size;
        s.structural = structural;
        s.statistical = statistical;
        s.joint = jc;
        s.split = idx < kTrainPerClass            ? Split::kTrain
                  : idx < kTrainPerClass + kValPerClass ? Split::kVal
                                                        : Split::kTest;
        s.pixels = compose_image(mask, sample_statistical(statistical, active, rng));
        char name[64];
        std::snprintf(name, sizeof(name), "c%d_%03d.pgm", jc, idx);
        d.manifest.entries.push_back({name, structural, statistical, jc, s.split});
        d.samples.push_back(std::move(s));
      }
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// PGM (P5, binary, maxval 255)

inline void write_pgm(const std::filesystem::path& path, int width, int height,
                      const std::vector<std::uint8_t>& pixels) {
  if (pixels.size() != static_cast<std::size_t>(width) * height) {
    throw std::invalid_argument("write_pgm: pixel count does not match dimensions");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pgm: cannot open " + path.string());
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw std::runtime_error("write_pgm: write failed for " + path.string());
}

struct PgmImage {
  int width = 0, height = 0;
  std::vector<std::uint8_t> pixels;
};

inline PgmImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_pgm: cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5") {
    throw std::runtime_error("read_pgm: " + path.string() + " is not a binary (P5) PGM, magic is '" +
                             magic + "'");
  }
  int width = 0, height = 0, maxval = 0;
  in >> width >> height >> maxval;
  if (!in || width < 1 || height < 1) {
    throw std::runtime_error("read_pgm: malformed header in " + path.string());
  }
  if (maxval != 255) {
    throw std::runtime_error("read_pgm: unsupported maxval " + std::to_string(maxval) + " in " +
                             path.string());
  }
  in.get();  // single whitespace after maxval
  PgmImage img;
  img.width = width;
  img.height = height;
  img.pixels.resize(static_cast<std::size_t>(width) * height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw std::runtime_error("read_pgm: truncated pixel data in " + path.string());
  }
  return img;
}

// ---------------------------------------------------------------------------
// on-disk dataset: images/*.pgm + manifest.csv + dataset.json

inline void write_dataset(const Dataset& d, const std::filesystem::path& dir) {
  if (d.samples.size() != d.manifest.entries.size()) {
    throw std::invalid_argument("write_dataset: manifest does not match samples");
  }
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    write_pgm(dir / d.manifest.entries[i].path, d.samples[i].size, d.samples[i].size,
              d.samples[i].pixels);
  }
  {
    std::ofstream csv(dir / "manifest.csv");
    if (!csv) throw std::runtime_error("write_dataset: cannot open manifest.csv");
    csv << "path,structural,statistical,class,split\n";
    for (const auto& e : d.manifest.entries) {
      csv << e.path << "," << structural_to_string(e.structural) << ","
          << statistical_to_string(e.statistical) << "," << e.joint << ","
          << split_to_string(e.split) << "\n";
    }
  }
  {
    nlohmann::json meta{{"image_size", d.manifest.image_size},
                        {"per_class", d.manifest.per_class},
                        {"seed", d.manifest.seed}};
    std::ofstream js(dir / "dataset.json");
    if (!js) throw std::runtime_error("write_dataset: cannot open dataset.json");
    js << meta.dump(2) << "\n";
  }
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream js(dir / "dataset.json");
  if (!js) throw std::runtime_error("load_dataset: missing dataset.json in " + dir.string());
  nlohmann::json meta = nlohmann::json::parse(js);
  Dataset d;
  d.manifest.image_size = meta.at("image_size").get<int>();
  d.manifest.per_class = meta.at("per_class").get<int>();
  d.manifest.seed = meta.at("seed").get<std::uint64_t>();

  std::ifstream csv(dir / "manifest.csv");
  if (!csv) throw std::runtime_error("load_dataset: missing manifest.csv in " + dir.string());
  std::string line;
  if (!std::getline(csv, line) || line != "path,structural,statistical,class,split") {
    throw std::runtime_error("load_dataset: unexpected manifest header '" + line + "'");
  }
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string path, structural, statistical, cls, split;
    if (!std::getline(row, path, ',') || !std::getline(row, structural, ',') ||
        !std::getline(row, statistical, ',') || !std::getline(row, cls, ',') ||
        !std::getline(row, split)) {
      throw std::runtime_error("load_dataset: malformed manifest row '" + line + "'");
    }
    DatasetManifest::Entry e;
    e.path = path;
    e.structural = structural_from_string(structural);
    e.statistical = statistical_from_string(statistical);
    e.joint = std::stoi(cls);
    e.split = split_from_string(split);
    if (e.joint != joint_class(e.structural, e.statistical)) {
      throw std::runtime_error("load_dataset: class column disagrees with tokens in '" + line + "'");
    }
    d.manifest.entries.push_back(std::move(e));
  }

  for (const auto& e : d.manifest.entries) {
    PgmImage img = read_pgm(dir / e.path);
    if (img.width != d.manifest.image_size || img.height != d.manifest.image_size) {
      throw std::runtime_error("load_dataset: " + e.path + " has size " +
                               std::to_string(img.width) + "x" + std::to_string(img.height) +
                               ", manifest says " + std::to_string(d.manifest.image_size));
    }
    SyntheticSample s;
    s.size = img.width;
    s.pixels = std::move(img.pixels);
    s.structural = e.structural;
    s.statistical = e.statistical;
    s.joint = e.joint;
    s.split = e.split;
    d.samples.push_back(std::move(s));
  }
  return d;
}

}  // namespace histlayer
