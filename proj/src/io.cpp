#include "panoslam/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace panoslam {

namespace fs = std::filesystem;

namespace {

std::vector<char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return buf;
}

void write_file(const fs::path& path, const char* data, size_t n) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(data, static_cast<std::streamsize>(n));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace

// ---- PPM --------------------------------------------------------------------

void write_ppm(const fs::path& path, const ColorImage& img) {
  std::string header = "P6\n" + std::to_string(img.width()) + " " +
                       std::to_string(img.height()) + "\n255\n";
  std::vector<char> buf(header.begin(), header.end());
  buf.reserve(buf.size() + img.size() * 3);
  for (const Vec3& c : img)
    for (int k = 0; k < 3; ++k) {
      const double v = std::min(1.0, std::max(0.0, c[k]));
      buf.push_back(static_cast<char>(static_cast<uint8_t>(std::lround(v * 255.0))));
    }
  write_file(path, buf.data(), buf.size());
}

ColorImage read_ppm(const fs::path& path) {
  const std::vector<char> buf = read_file(path);
  std::istringstream head(std::string(buf.begin(), buf.begin() + std::min<size_t>(buf.size(), 64)));
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  head >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255)
    throw IoError("not an 8-bit P6 ppm: " + path.string());
  const size_t offset = static_cast<size_t>(head.tellg()) + 1;  // single whitespace after maxval
  const size_t need = static_cast<size_t>(w) * h * 3;
  if (buf.size() != offset + need) throw IoError("ppm payload size mismatch: " + path.string());
  ColorImage img = make_color_image(w, h);
  for (size_t i = 0; i < img.size(); ++i)
    for (int k = 0; k < 3; ++k)
      img[i][k] = static_cast<uint8_t>(buf[offset + 3 * i + k]) / 255.0;
  return img;
}

// ---- raw rasters -------------------------------------------------------------

void write_f32_raster(const fs::path& path, const DepthImage& img) {
  std::vector<char> buf(img.size() * 4);
  for (size_t i = 0; i < img.size(); ++i) {
    const float f = static_cast<float>(img[i]);
    std::memcpy(buf.data() + 4 * i, &f, 4);
  }
  write_file(path, buf.data(), buf.size());
}

DepthImage read_f32_raster(const fs::path& path, int width, int height) {
  const std::vector<char> buf = read_file(path);
  const size_t need = static_cast<size_t>(width) * height * 4;
  if (buf.size() != need) throw IoError("f32 raster size mismatch: " + path.string());
  DepthImage img(width, height);
  for (size_t i = 0; i < img.size(); ++i) {
    float f;
    std::memcpy(&f, buf.data() + 4 * i, 4);
    if (!std::isfinite(f)) throw IoError("non-finite depth in " + path.string());
    img[i] = static_cast<double>(f);
  }
  return img;
}

void write_panoptic_raster(const fs::path& path, const PanopticLabels& labels) {
  std::vector<char> buf(labels.instances.size() * 4);
  for (size_t i = 0; i < labels.instances.size(); ++i) {
    const int32_t inst = labels.instances[i];
    uint32_t v = kVoidLabel;
    if (inst >= 0) {
      const uint32_t cls = static_cast<uint32_t>(labels.instance_classes[inst]);
      v = (cls << 16) | static_cast<uint32_t>(inst);
    }
    std::memcpy(buf.data() + 4 * i, &v, 4);
  }
  write_file(path, buf.data(), buf.size());
}

PanopticLabels read_panoptic_raster(const fs::path& path, int width, int height) {
  const std::vector<char> buf = read_file(path);
  const size_t need = static_cast<size_t>(width) * height * 4;
  if (buf.size() != need) throw IoError("panoptic raster size mismatch: " + path.string());
  PanopticLabels out;
  out.instances = LabelImage(width, height, -1);
  for (size_t i = 0; i < out.instances.size(); ++i) {
    uint32_t v;
    std::memcpy(&v, buf.data() + 4 * i, 4);
    if (v == kVoidLabel) continue;
    const uint32_t cls = v >> 16;
    const uint32_t inst = v & 0xFFFFu;
    if (inst >= out.instance_classes.size()) out.instance_classes.resize(inst + 1, -1);
    if (out.instance_classes[inst] >= 0 && out.instance_classes[inst] != static_cast<int>(cls))
      throw IoError("inconsistent class for instance in " + path.string());
    out.instance_classes[inst] = static_cast<int>(cls);
    out.instances[i] = static_cast<int32_t>(inst);
  }
  return out;
}

void write_tensor(const fs::path& path, const Tensor3& t) {
  if (t.data.size() != static_cast<size_t>(t.d0) * t.d1 * t.d2)
    throw IoError("tensor dims do not match payload");
  std::vector<char> buf(16 + t.data.size() * 4);
  std::memcpy(buf.data(), "PTSR", 4);
  std::memcpy(buf.data() + 4, &t.d0, 4);
  std::memcpy(buf.data() + 8, &t.d1, 4);
  std::memcpy(buf.data() + 12, &t.d2, 4);
  std::memcpy(buf.data() + 16, t.data.data(), t.data.size() * 4);
  write_file(path, buf.data(), buf.size());
}

Tensor3 read_tensor(const fs::path& path) {
  const std::vector<char> buf = read_file(path);
  if (buf.size() < 16 || std::memcmp(buf.data(), "PTSR", 4) != 0)
    throw IoError("bad tensor header: " + path.string());
  Tensor3 t;
  std::memcpy(&t.d0, buf.data() + 4, 4);
  std::memcpy(&t.d1, buf.data() + 8, 4);
  std::memcpy(&t.d2, buf.data() + 12, 4);
  const size_t count = static_cast<size_t>(t.d0) * t.d1 * t.d2;
  if (buf.size() != 16 + count * 4) throw IoError("tensor payload size mismatch: " + path.string());
  t.data.resize(count);
  std::memcpy(t.data.data(), buf.data() + 16, count * 4);
  return t;
}

// ---- trajectories ------------------------------------------------------------

void write_trajectory(const fs::path& path, const std::vector<CameraPose>& poses) {
  std::string out;
  char line[256];
  for (size_t i = 0; i < poses.size(); ++i) {
    const CameraPose inv = poses[i].inverse();  // camera-to-world on disk
    const Vec3& t = inv.translation();
    const Vec4& q = inv.quat();
    std::snprintf(line, sizeof(line),
                  "%zu %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", i, t.x(), t.y(), t.z(),
                  q[1], q[2], q[3], q[0]);
    out += line;
  }
  write_file(path, out.data(), out.size());
}

std::vector<CameraPose> read_trajectory(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trajectory " + path.string());
  std::vector<CameraPose> poses;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    size_t idx;
    double tx, ty, tz, qx, qy, qz, qw;
    if (!(ls >> idx >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
      throw IoError("malformed trajectory line in " + path.string() + ": " + line);
    if (idx != poses.size()) throw IoError("trajectory indices not contiguous in " + path.string());
    poses.push_back(CameraPose(Vec4(qw, qx, qy, qz), Vec3(tx, ty, tz)).inverse());
  }
  return poses;
}

// ---- sequences ----------------------------------------------------------------

namespace {

std::string frame_stem(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05d", index);
  return buf;
}

Tensor3 regions_to_tensor(const PseudoLabels& pseudo) {
  Tensor3 t;
  t.d0 = static_cast<uint32_t>(pseudo.regions.height());
  t.d1 = static_cast<uint32_t>(pseudo.regions.width());
  t.d2 = static_cast<uint32_t>(pseudo.num_regions());
  t.data.assign(static_cast<size_t>(t.d0) * t.d1 * t.d2, 0.0f);
  for (uint32_t y = 0; y < t.d0; ++y)
    for (uint32_t x = 0; x < t.d1; ++x) {
      const int32_t r = pseudo.regions(static_cast<int>(x), static_cast<int>(y));
      if (r >= 0) t.at(y, x, static_cast<uint32_t>(r)) = 1.0f;
    }
  return t;
}

LabelImage tensor_to_regions(const Tensor3& t, const std::string& where) {
  LabelImage regions(static_cast<int>(t.d1), static_cast<int>(t.d0), -1);
  for (uint32_t y = 0; y < t.d0; ++y)
    for (uint32_t x = 0; x < t.d1; ++x) {
      double sum = 0, best = -1;
      int arg = -1;
      for (uint32_t r = 0; r < t.d2; ++r) {
        const double v = t.at(y, x, r);
        if (v < 0) throw IoError("negative region probability in " + where);
        sum += v;
        if (v > best) {
          best = v;
          arg = static_cast<int>(r);
        }
      }
      if (std::abs(sum) < 1e-6) continue;  // void pixel
      if (std::abs(sum - 1.0) > 1e-6)
        throw IoError("region distribution does not sum to 1 in " + where);
      regions(static_cast<int>(x), static_cast<int>(y)) = arg;
    }
  return regions;
}

}  // namespace

void write_sequence(const SequenceData& seq, const fs::path& dir) {
  fs::create_directories(dir / "frames");
  std::string manifest;
  manifest += "panoslam_sequence 1\n";
  {
    char line[256];
    std::snprintf(line, sizeof(line), "intrinsics %.17g %.17g %.17g %.17g %d %d\n", seq.intr.fx,
                  seq.intr.fy, seq.intr.cx, seq.intr.cy, seq.intr.width, seq.intr.height);
    manifest += line;
    std::snprintf(line, sizeof(line), "depth_scale %.17g\n", seq.depth_scale);
    manifest += line;
    std::snprintf(line, sizeof(line), "frame_count %zu\n", seq.frames.size());
    manifest += line;
  }
  if (seq.gt_poses) {
    write_trajectory(dir / "traj_gt.txt", *seq.gt_poses);
    manifest += "gt_trajectory traj_gt.txt\n";
  }
  for (size_t i = 0; i < seq.frames.size(); ++i) {
    const Frame& f = seq.frames[i];
    const std::string stem = frame_stem(static_cast<int>(i));
    std::string entry = "frame " + std::to_string(i);
    write_ppm(dir / "frames" / (stem + ".color.ppm"), f.color);
    entry += " color=frames/" + stem + ".color.ppm";
    DepthImage scaled = f.depth;
    for (double& d : scaled) d /= seq.depth_scale;
    write_f32_raster(dir / "frames" / (stem + ".depth.f32"), scaled);
    entry += " depth=frames/" + stem + ".depth.f32";
    if (f.gt_panoptic) {
      write_panoptic_raster(dir / "frames" / (stem + ".panoptic.u32"), *f.gt_panoptic);
      entry += " panoptic=frames/" + stem + ".panoptic.u32";
    }
    if (f.pseudo) {
      write_tensor(dir / "frames" / (stem + ".pregions.tensor"), regions_to_tensor(*f.pseudo));
      Tensor3 cls;
      cls.d0 = static_cast<uint32_t>(f.pseudo->region_classes.rows());
      cls.d1 = static_cast<uint32_t>(f.pseudo->region_classes.cols());
      cls.d2 = 1;
      cls.data.resize(static_cast<size_t>(cls.d0) * cls.d1);
      for (uint32_t r = 0; r < cls.d0; ++r)
        for (uint32_t c = 0; c < cls.d1; ++c)
          cls.at(r, c, 0) = static_cast<float>(f.pseudo->region_classes(r, c));
      write_tensor(dir / "frames" / (stem + ".pclasses.tensor"), cls);
      entry += " pseudo_regions=frames/" + stem + ".pregions.tensor";
      entry += " pseudo_classes=frames/" + stem + ".pclasses.tensor";
    }
    manifest += entry + "\n";
  }
  write_file(dir / "manifest.txt", manifest.data(), manifest.size());
}

SequenceData read_sequence(const fs::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw IoError("cannot open manifest in " + dir.string());
  SequenceData seq;
  std::string line;
  size_t frame_count = 0;
  std::string gt_traj;
  bool have_magic = false, have_intr = false;

  struct FrameEntry {
    std::string color, depth, panoptic, pregions, pclasses;
  };
  std::vector<FrameEntry> entries;

  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "panoslam_sequence") {
      int version = 0;
      ls >> version;
      if (version != 1) throw IoError("unsupported sequence schema version");
      have_magic = true;
    } else if (key == "intrinsics") {
      ls >> seq.intr.fx >> seq.intr.fy >> seq.intr.cx >> seq.intr.cy >> seq.intr.width >>
          seq.intr.height;
      if (!ls) throw IoError("malformed intrinsics line");
      seq.intr.validate();
      have_intr = true;
    } else if (key == "depth_scale") {
      ls >> seq.depth_scale;
      if (!ls || !(seq.depth_scale > 0)) throw IoError("malformed depth_scale");
    } else if (key == "frame_count") {
      ls >> frame_count;
      entries.resize(frame_count);
    } else if (key == "gt_trajectory") {
      ls >> gt_traj;
    } else if (key == "frame") {
      size_t idx;
      ls >> idx;
      if (!ls || idx >= entries.size())
        throw IoError("frame index out of range in manifest: " + line);
      std::string token;
      while (ls >> token) {
        const size_t eq = token.find('=');
        if (eq == std::string::npos) throw IoError("malformed frame entry: " + token);
        const std::string k = token.substr(0, eq), v = token.substr(eq + 1);
        if (k == "color") entries[idx].color = v;
        else if (k == "depth") entries[idx].depth = v;
        else if (k == "panoptic") entries[idx].panoptic = v;
        else if (k == "pseudo_regions") entries[idx].pregions = v;
        else if (k == "pseudo_classes") entries[idx].pclasses = v;
        else throw IoError("unknown frame entry key: " + k);
      }
    } else {
      throw IoError("unknown manifest key: " + key);
    }
  }
  if (!have_magic) throw IoError("missing schema version in manifest");
  if (!have_intr) throw IoError("missing intrinsics in manifest");

  seq.frames.reserve(frame_count);
  for (size_t i = 0; i < frame_count; ++i) {
    const std::string at = "frame " + std::to_string(i);
    const FrameEntry& e = entries[i];
    if (e.color.empty() || e.depth.empty()) throw IoError(at + ": missing color or depth entry");
    Frame f;
    f.index = static_cast<int>(i);
    try {
      f.color = read_ppm(dir / e.color);
      f.depth = read_f32_raster(dir / e.depth, seq.intr.width, seq.intr.height);
      for (double& d : f.depth) d *= seq.depth_scale;
      if (!e.panoptic.empty())
        f.gt_panoptic = read_panoptic_raster(dir / e.panoptic, seq.intr.width, seq.intr.height);
      if (!e.pregions.empty()) {
        PseudoLabels pseudo;
        const Tensor3 reg = read_tensor(dir / e.pregions);
        if (reg.d0 != static_cast<uint32_t>(seq.intr.height) ||
            reg.d1 != static_cast<uint32_t>(seq.intr.width))
          throw IoError("pseudo region raster dimension mismatch");
        pseudo.regions = tensor_to_regions(reg, at);
        if (e.pclasses.empty()) throw IoError("pseudo regions without classes");
        const Tensor3 cls = read_tensor(dir / e.pclasses);
        if (cls.d0 != reg.d2 || cls.d2 != 1) throw IoError("pseudo class tensor shape mismatch");
        pseudo.region_classes.resize(cls.d0, cls.d1);
        for (uint32_t r = 0; r < cls.d0; ++r)
          for (uint32_t c = 0; c < cls.d1; ++c)
            pseudo.region_classes(r, c) = cls.at(r, c, 0);
        f.pseudo = std::move(pseudo);
      }
      f.validate(seq.intr);
    } catch (const std::exception& ex) {
      throw IoError(at + ": " + ex.what());
    }
    seq.frames.push_back(std::move(f));
  }
  if (!gt_traj.empty()) {
    seq.gt_poses = read_trajectory(dir / gt_traj);
    if (seq.gt_poses->size() != seq.frames.size())
      throw IoError("gt trajectory length does not match frame count");
  }
  return seq;
}

// ---- binary primitives ---------------------------------------------------------

BinaryWriter::BinaryWriter(const fs::path& path) : path_(path.string()) {}

BinaryWriter::~BinaryWriter() {
  if (!closed_) close();
}

void BinaryWriter::u32(uint32_t v) { bytes(&v, 4); }
void BinaryWriter::i64(int64_t v) { bytes(&v, 8); }
void BinaryWriter::f64(double v) { bytes(&v, 8); }

void BinaryWriter::bytes(const void* p, size_t n) {
  const char* c = static_cast<const char*>(p);
  buf_.insert(buf_.end(), c, c + n);
}

void BinaryWriter::doubles(const double* p, size_t n) { bytes(p, n * 8); }

void BinaryWriter::close() {
  write_file(path_, buf_.data(), buf_.size());
  closed_ = true;
}

BinaryReader::BinaryReader(const fs::path& path) : path_(path.string()), buf_(read_file(path)) {}

void BinaryReader::need(size_t n) {
  if (pos_ + n > buf_.size()) throw IoError("truncated binary file " + path_);
}

uint32_t BinaryReader::u32() {
  need(4);
  uint32_t v;
  std::memcpy(&v, buf_.data() + pos_, 4);
  pos_ += 4;
  return v;
}

int64_t BinaryReader::i64() {
  need(8);
  int64_t v;
  std::memcpy(&v, buf_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

double BinaryReader::f64() {
  need(8);
  double v;
  std::memcpy(&v, buf_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

void BinaryReader::doubles(double* p, size_t n) {
  need(8 * n);
  std::memcpy(p, buf_.data() + pos_, 8 * n);
  pos_ += 8 * n;
}

}  // namespace panoslam
