#include "dgm/io.hpp"

#include "binary.hpp"

#include <png.h>

#include "json.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

namespace dgm {

// ---------------------------------------------------------------------------
// Sequence types

const TrackEntry *PointTrack::at(int frame) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), frame,
                             [](const TrackEntry &e, int f) { return e.frame < f; });
  return it != entries.end() && it->frame == frame ? &*it : nullptr;
}

const FrameBundle &Sequence::frame(int index) const {
  if (index < 1 || index > num_frames())
    throw Error("frame " + std::to_string(index) + " outside [1, " + std::to_string(num_frames()) + "]");
  return frames[index - 1];
}

void Sequence::validate() const {
  if (frames.empty()) throw Error("sequence has no frames");
  const int w = frames.front().rgb.width, h = frames.front().rgb.height;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const FrameBundle &f = frames[i];
    const std::string tag = "frame " + std::to_string(f.index);
    if (f.index != static_cast<int>(i) + 1) throw Error(tag + ": frame indices must be contiguous from 1");
    if (f.rgb.channels != 3) throw Error(tag + ": rgb must have 3 channels");
    if (f.rgb.width != w || f.rgb.height != h) throw Error(tag + ": rgb size differs from frame 1");
    if (f.depth.width != w || f.depth.height != h || f.depth.channels != 1)
      throw Error(tag + ": depth size differs from rgb");
    if (f.seg.width != w || f.seg.height != h || f.seg.channels != 1)
      throw Error(tag + ": segmentation size differs from rgb");
    if (f.camera.width != w || f.camera.height != h) throw Error(tag + ": camera size differs from rgb");
    f.camera.validate();
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const float d = f.depth.at(x, y);
        if (!std::isfinite(d) || d < 0.0f)
          throw Error(tag + " pixel (" + std::to_string(x) + "," + std::to_string(y) +
                      "): invalid depth " + std::to_string(d));
        if (!labels.empty() && f.seg.at(x, y) >= labels.size())
          throw Error(tag + " pixel (" + std::to_string(x) + "," + std::to_string(y) +
                      "): label " + std::to_string(f.seg.at(x, y)) + " not in label table");
      }
  }
  for (const PointTrack &t : tracks) {
    int prev = 0;
    for (const TrackEntry &e : t.entries) {
      const std::string tag = "track " + std::to_string(t.id) + " frame " + std::to_string(e.frame);
      if (e.frame < 1 || e.frame > num_frames()) throw Error(tag + ": frame not in sequence");
      if (e.frame <= prev) throw Error(tag + ": entries must be sorted with one per frame");
      prev = e.frame;
      if (!e.position.allFinite()) throw Error(tag + ": non-finite position");
      if (e.visible && (e.position.x() < 0 || e.position.y() < 0 || e.position.x() >= w ||
                        e.position.y() >= h))
        throw Error(tag + ": visible position outside the image");
    }
  }
  for (const NovelView &v : novel_views) {
    if (v.frame < 1 || v.frame > num_frames()) throw Error("novel view references a missing frame");
    v.camera.validate();
    if (v.rgb.width != v.camera.width || v.rgb.height != v.camera.height || v.rgb.channels != 3)
      throw Error("novel view image does not match its camera");
  }
  for (const KeypointPair &k : keypoints)
    if (k.source_frame < 1 || k.source_frame > num_frames() || k.query_frame < 1 ||
        k.query_frame > num_frames())
      throw Error("keypoint " + std::to_string(k.id) + " references a missing frame");
  if (gt_marbles) gt_marbles->validate();
}

// ---------------------------------------------------------------------------
// Files

namespace {

std::string read_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path &path, const std::string &data) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error("write failed: " + path.string());
}

struct FileCloser {
  void operator()(FILE *f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

FilePtr open_file(const fs::path &path, const char *mode) {
  if (mode[0] == 'w' && path.has_parent_path()) fs::create_directories(path.parent_path());
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw Error("cannot open " + path.string());
  return f;
}

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
  *static_cast<std::string *>(png_get_error_ptr(png)) = msg;
  png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

// Reads a PNG as 8-bit RGB (channels = 3) or 16-bit gray (channels = 1).
template <typename T>
Image<T> read_png(const fs::path &path, int channels) {
  auto file = open_file(path, "rb");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) throw Error("libpng init failed");
  Image<T> img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(path.string() + ": " + err);
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (channels == 3) {
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (depth < 8) png_set_packing(png);
  } else {
    if (color != PNG_COLOR_TYPE_GRAY) {
      err = "label image must be single-channel gray";
      png_longjmp(png, 1);
    }
    if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (depth == 16) png_set_swap(png);
  }
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  img = Image<T>(w, h, channels);
  std::vector<std::uint8_t> raw(rowbytes * h);
  rows.resize(h);
  for (int y = 0; y < h; ++y) rows[y] = raw.data() + y * rowbytes;
  png_read_image(png, rows.data());
  const int bits = png_get_bit_depth(png, info);
  png_destroy_read_struct(&png, &info, nullptr);
  if constexpr (sizeof(T) == 1) {
    if (rowbytes != static_cast<std::size_t>(w) * 3) throw Error(path.string() + ": unexpected PNG layout");
    std::copy(raw.begin(), raw.end(), img.data.begin());
  } else {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::uint8_t *p = rows[y];
        img.at(x, y) = bits == 16 ? static_cast<T>(p[2 * x] | (p[2 * x + 1] << 8)) : p[x];
      }
  }
  return img;
}

template <typename T>
void write_png(const fs::path &path, const Image<T> &img, bool rgb) {
  auto file = open_file(path, "wb");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) throw Error("libpng init failed");
  std::vector<std::uint8_t> raw;
  std::vector<png_bytep> rows(img.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(path.string() + ": " + err);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, img.width, img.height, rgb ? 8 : 16,
               rgb ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t rowbytes = static_cast<std::size_t>(img.width) * (rgb ? 3 : 2);
  raw.resize(rowbytes * img.height);
  for (int y = 0; y < img.height; ++y) {
    std::uint8_t *p = raw.data() + y * rowbytes;
    rows[y] = p;
    for (int x = 0; x < img.width; ++x) {
      if constexpr (sizeof(T) == 1) {
        for (int c = 0; c < 3; ++c) p[3 * x + c] = img.at(x, y, c);
      } else {
        p[2 * x] = static_cast<std::uint8_t>(img.at(x, y) >> 8);
        p[2 * x + 1] = static_cast<std::uint8_t>(img.at(x, y) & 0xff);
      }
    }
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

constexpr char kDepthMagic[8] = {'D', 'G', 'M', 'D', 'E', 'P', 'T', 'H'};
constexpr char kMarbleMagic[8] = {'D', 'G', 'M', 'M', 'A', 'R', 'B', 0};
constexpr char kTrajMagic[8] = {'D', 'G', 'M', 'T', 'R', 'A', 'J', 0};

std::vector<std::string> split(const std::string &s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string &s, const std::string &where) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception &) {
    throw Error(where + ": cannot parse number '" + s + "'");
  }
  if (used != s.size()) throw Error(where + ": cannot parse number '" + s + "'");
  return v;
}

int parse_int(const std::string &s, const std::string &where) {
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(s, &used);
  } catch (const std::exception &) {
    throw Error(where + ": cannot parse integer '" + s + "'");
  }
  if (used != s.size()) throw Error(where + ": cannot parse integer '" + s + "'");
  return static_cast<int>(v);
}

std::vector<std::string> data_lines(const fs::path &path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string frame_name(int index, const char *ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05d%s", index, ext);
  return buf;
}

ImageU8 read_png_rgb(const fs::path &path) { return read_png<std::uint8_t>(path, 3); }
void write_png_rgb(const fs::path &path, const ImageU8 &image) {
  if (image.channels != 3) throw Error("write_png_rgb: image must have 3 channels");
  write_png(path, image, true);
}
ImageU16 read_png_gray16(const fs::path &path) { return read_png<std::uint16_t>(path, 1); }
void write_png_gray16(const fs::path &path, const ImageU16 &image) {
  if (image.channels != 1) throw Error("write_png_gray16: image must have 1 channel");
  write_png(path, image, false);
}

ImageF read_depth(const fs::path &path) {
  const std::string data = read_file(path);
  bin::Reader r(data, path.string());
  if (r.get_bytes(8) != std::string_view(kDepthMagic, 8)) throw Error(path.string() + ": bad depth magic");
  const auto w = r.get<std::uint32_t>(), h = r.get<std::uint32_t>();
  if (w == 0 || h == 0) throw Error(path.string() + ": empty depth raster");
  if (r.remaining() != static_cast<std::size_t>(w) * h * 4)
    throw Error(path.string() + ": depth payload size does not match header");
  ImageF img(static_cast<int>(w), static_cast<int>(h), 1);
  for (float &v : img.data) v = r.get<float>();
  return img;
}

void write_depth(const fs::path &path, const ImageF &depth) {
  bin::Writer w;
  w.put_bytes(std::string_view(kDepthMagic, 8));
  w.put(static_cast<std::uint32_t>(depth.width));
  w.put(static_cast<std::uint32_t>(depth.height));
  for (float v : depth.data) w.put(v);
  write_file(path, w.data());
}

ImageU8 to_rgb8(const ImageD &color) {
  ImageU8 out(color.width, color.height, 3);
  for (int y = 0; y < color.height; ++y)
    for (int x = 0; x < color.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(color.at(x, y, c), 0.0, 1.0);
        out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  return out;
}

std::vector<PointTrack> read_tracks(const fs::path &path) {
  const auto lines = data_lines(path);
  if (lines.empty() || lines[0] != "track_id,frame,x,y,visible")
    throw Error(path.string() + ": expected header track_id,frame,x,y,visible");
  std::map<int, PointTrack> tracks;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(i + 1);
    const auto f = split(lines[i], ',');
    if (f.size() != 5) throw Error(where + ": expected 5 fields");
    const int id = parse_int(f[0], where);
    TrackEntry e;
    e.frame = parse_int(f[1], where);
    e.position = Vec2(parse_double(f[2], where), parse_double(f[3], where));
    e.visible = parse_int(f[4], where) != 0;
    auto &t = tracks[id];
    t.id = id;
    t.entries.push_back(e);
  }
  std::vector<PointTrack> out;
  for (auto &[id, t] : tracks) {
    std::stable_sort(t.entries.begin(), t.entries.end(),
                     [](const TrackEntry &a, const TrackEntry &b) { return a.frame < b.frame; });
    out.push_back(std::move(t));
  }
  return out;
}

void write_tracks(const fs::path &path, const std::vector<PointTrack> &tracks) {
  std::string s = "track_id,frame,x,y,visible\n";
  for (const PointTrack &t : tracks)
    for (const TrackEntry &e : t.entries)
      s += std::to_string(t.id) + "," + std::to_string(e.frame) + "," + fmt(e.position.x()) + "," +
           fmt(e.position.y()) + "," + (e.visible ? "1" : "0") + "\n";
  write_file(path, s);
}

std::vector<CameraEntry> read_cameras(const fs::path &path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception &e) {
    throw Error(path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw Error(path.string() + ": expected a JSON list of cameras");
  std::vector<CameraEntry> out;
  for (const auto &item : j) {
    try {
      CameraEntry e;
      e.frame = item.at("frame").get<int>();
      e.view = item.value("view", 0);
      Camera &c = e.camera;
      c.width = item.at("width").get<int>();
      c.height = item.at("height").get<int>();
      const auto &k = item.at("K");
      c.fx = k.at(0).at(0).get<double>();
      c.fy = k.at(1).at(1).get<double>();
      c.cx = k.at(0).at(2).get<double>();
      c.cy = k.at(1).at(2).get<double>();
      const auto &m = item.at("world_to_camera");
      for (int r = 0; r < 3; ++r) {
        for (int col = 0; col < 3; ++col) c.rotation(r, col) = m.at(r).at(col).get<double>();
        c.translation[r] = m.at(r).at(3).get<double>();
      }
      c.validate();
      out.push_back(e);
    } catch (const nlohmann::json::exception &ex) {
      throw Error(path.string() + ": malformed camera entry: " + ex.what());
    } catch (const Error &ex) {
      throw Error(path.string() + ": " + ex.what());
    }
  }
  return out;
}

void write_cameras(const fs::path &path, const std::vector<CameraEntry> &cameras) {
  nlohmann::json j = nlohmann::json::array();
  for (const CameraEntry &e : cameras) {
    const Camera &c = e.camera;
    nlohmann::json item;
    item["frame"] = e.frame;
    item["view"] = e.view;
    item["width"] = c.width;
    item["height"] = c.height;
    item["K"] = {{c.fx, 0.0, c.cx}, {0.0, c.fy, c.cy}, {0.0, 0.0, 1.0}};
    nlohmann::json m = nlohmann::json::array();
    for (int r = 0; r < 3; ++r)
      m.push_back({c.rotation(r, 0), c.rotation(r, 1), c.rotation(r, 2), c.translation[r]});
    m.push_back({0.0, 0.0, 0.0, 1.0});
    item["world_to_camera"] = m;
    j.push_back(item);
  }
  write_file(path, j.dump(1) + "\n");
}

MarbleSet read_marbles(const fs::path &path) {
  const std::string data = read_file(path);
  bin::Reader r(data, path.string());
  if (r.get_bytes(8) != std::string_view(kMarbleMagic, 8)) throw Error(path.string() + ": bad marble magic");
  if (r.get<std::uint32_t>() != 1) throw Error(path.string() + ": unsupported marble table version");
  const auto count = r.get<std::uint32_t>();
  MarbleSet set;
  set.first_frame = r.get<std::int32_t>();
  set.last_frame = r.get<std::int32_t>();
  if (set.last_frame < set.first_frame) throw Error(path.string() + ": invalid interval");
  const std::size_t len = static_cast<std::size_t>(set.length());
  r.check_count(count, 8 * 8 + 4 + 24 * len);
  set.marbles.resize(count);
  for (Marble &m : set.marbles) {
    m.mu = r.get_vec3();
    m.log_scale = r.get<double>();
    m.color = r.get_vec3();
    m.opacity_logit = r.get<double>();
    m.instance = r.get<std::int32_t>();
    m.delta_x.resize(len);
    for (Vec3 &d : m.delta_x) d = r.get_vec3();
  }
  if (r.remaining() != 0) throw Error(path.string() + ": trailing bytes");
  return set;
}

void write_marbles(const fs::path &path, const MarbleSet &set) {
  bin::Writer w;
  w.put_bytes(std::string_view(kMarbleMagic, 8));
  w.put(std::uint32_t{1});
  w.put(static_cast<std::uint32_t>(set.size()));
  w.put(static_cast<std::int32_t>(set.first_frame));
  w.put(static_cast<std::int32_t>(set.last_frame));
  for (const Marble &m : set.marbles) {
    w.put_vec3(m.mu);
    w.put(m.log_scale);
    w.put_vec3(m.color);
    w.put(m.opacity_logit);
    w.put(static_cast<std::int32_t>(m.instance));
    for (const Vec3 &d : m.delta_x) w.put_vec3(d);
  }
  write_file(path, w.data());
}

std::vector<KeypointPair> read_keypoints(const fs::path &path) {
  const auto lines = data_lines(path);
  if (lines.empty() || lines[0] != "id,source_frame,source_x,source_y,query_frame,query_x,query_y")
    throw Error(path.string() + ": unexpected keypoint header");
  std::vector<KeypointPair> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(i + 1);
    const auto f = split(lines[i], ',');
    if (f.size() != 7) throw Error(where + ": expected 7 fields");
    KeypointPair k;
    k.id = parse_int(f[0], where);
    k.source_frame = parse_int(f[1], where);
    k.source = Vec2(parse_double(f[2], where), parse_double(f[3], where));
    k.query_frame = parse_int(f[4], where);
    k.query = Vec2(parse_double(f[5], where), parse_double(f[6], where));
    out.push_back(k);
  }
  return out;
}

void write_keypoints(const fs::path &path, const std::vector<KeypointPair> &keypoints) {
  std::string s = "id,source_frame,source_x,source_y,query_frame,query_x,query_y\n";
  for (const KeypointPair &k : keypoints)
    s += std::to_string(k.id) + "," + std::to_string(k.source_frame) + "," + fmt(k.source.x()) + "," +
         fmt(k.source.y()) + "," + std::to_string(k.query_frame) + "," + fmt(k.query.x()) + "," +
         fmt(k.query.y()) + "\n";
  write_file(path, s);
}

// ---------------------------------------------------------------------------
// Sequence directories

Sequence load_sequence(const fs::path &root) {
  if (!fs::is_directory(root)) throw Error("dataset directory not found: " + root.string());
  Sequence seq;
  const auto cams = read_cameras(root / "cameras.txt");
  std::map<int, Camera> by_frame;
  for (const auto &e : cams) by_frame[e.frame] = e.camera;
  for (int index = 1;; ++index) {
    const fs::path rgb = root / "rgb" / frame_name(index, ".png");
    if (!fs::exists(rgb)) break;
    FrameBundle f;
    f.index = index;
    f.rgb = read_png_rgb(rgb);
    f.depth = read_depth(root / "depth" / frame_name(index, ".f32"));
    f.seg = read_png_gray16(root / "seg" / frame_name(index, ".png"));
    auto it = by_frame.find(index);
    if (it == by_frame.end()) throw Error("cameras.txt: no camera for frame " + std::to_string(index));
    f.camera = it->second;
    seq.frames.push_back(std::move(f));
  }
  if (seq.frames.empty()) throw Error(root.string() + ": no frames found under rgb/");
  if (static_cast<int>(by_frame.size()) != seq.num_frames())
    throw Error("cameras.txt lists " + std::to_string(by_frame.size()) + " cameras for " +
                std::to_string(seq.num_frames()) + " frames");
  if (fs::exists(root / "tracks.csv")) seq.tracks = read_tracks(root / "tracks.csv");
  if (fs::exists(root / "labels.txt"))
    for (const auto &line : data_lines(root / "labels.txt"))
      if (!line.empty()) seq.labels.push_back(line);
  const fs::path gt = root / "gt";
  if (fs::exists(gt / "marbles.bin")) seq.gt_marbles = read_marbles(gt / "marbles.bin");
  if (fs::exists(gt / "novel_cameras.txt")) {
    for (const auto &e : read_cameras(gt / "novel_cameras.txt")) {
      NovelView v;
      v.frame = e.frame;
      v.view = e.view;
      v.camera = e.camera;
      char name[32];
      std::snprintf(name, sizeof name, "%05d_%02d.png", e.frame, e.view);
      v.rgb = read_png_rgb(gt / "novel" / name);
      seq.novel_views.push_back(std::move(v));
    }
  }
  if (fs::exists(gt / "keypoints.csv")) seq.keypoints = read_keypoints(gt / "keypoints.csv");
  seq.validate();
  return seq;
}

void save_sequence(const fs::path &root, const Sequence &seq) {
  seq.validate();
  fs::create_directories(root);
  std::vector<CameraEntry> cams;
  for (const FrameBundle &f : seq.frames) {
    write_png_rgb(root / "rgb" / frame_name(f.index, ".png"), f.rgb);
    write_depth(root / "depth" / frame_name(f.index, ".f32"), f.depth);
    write_png_gray16(root / "seg" / frame_name(f.index, ".png"), f.seg);
    cams.push_back({f.index, 0, f.camera});
  }
  write_cameras(root / "cameras.txt", cams);
  write_tracks(root / "tracks.csv", seq.tracks);
  std::string labels;
  for (const auto &l : seq.labels) labels += l + "\n";
  write_file(root / "labels.txt", labels);
  const fs::path gt = root / "gt";
  if (seq.gt_marbles) write_marbles(gt / "marbles.bin", *seq.gt_marbles);
  if (!seq.novel_views.empty()) {
    std::vector<CameraEntry> nc;
    for (const NovelView &v : seq.novel_views) {
      nc.push_back({v.frame, v.view, v.camera});
      char name[32];
      std::snprintf(name, sizeof name, "%05d_%02d.png", v.frame, v.view);
      write_png_rgb(gt / "novel" / name, v.rgb);
    }
    write_cameras(gt / "novel_cameras.txt", nc);
  }
  if (!seq.keypoints.empty()) write_keypoints(gt / "keypoints.csv", seq.keypoints);
}

// ---------------------------------------------------------------------------
// Exports

void write_trajectories(const fs::path &path, const std::vector<MarbleSet> &sets) {
  std::uint64_t rows = 0;
  for (const MarbleSet &s : sets) rows += s.size() * static_cast<std::uint64_t>(s.length());
  bin::Writer w;
  w.put_bytes(std::string_view(kTrajMagic, 8));
  w.put(std::uint32_t{1});
  w.put(rows);
  std::uint32_t id = 0;
  for (const MarbleSet &s : sets)
    for (const Marble &m : s.marbles) {
      for (int k = 0; k < s.length(); ++k) {
        const Vec3 p = m.mu + m.delta_x[k];
        w.put(id);
        w.put(static_cast<std::uint32_t>(m.instance));
        w.put(static_cast<std::int32_t>(s.first_frame + k));
        w.put(static_cast<float>(p.x()));
        w.put(static_cast<float>(p.y()));
        w.put(static_cast<float>(p.z()));
      }
      ++id;
    }
  write_file(path, w.data());
}

std::vector<TrajectoryRow> read_trajectories(const fs::path &path) {
  const std::string data = read_file(path);
  bin::Reader r(data, path.string());
  if (r.get_bytes(8) != std::string_view(kTrajMagic, 8)) throw Error(path.string() + ": bad trajectory magic");
  if (r.get<std::uint32_t>() != 1) throw Error(path.string() + ": unsupported trajectory version");
  const auto rows = r.get<std::uint64_t>();
  r.check_count(rows, 24);
  std::vector<TrajectoryRow> out(rows);
  for (auto &row : out) {
    row.marble = r.get<std::uint32_t>();
    row.instance = r.get<std::uint32_t>();
    row.frame = r.get<std::int32_t>();
    row.x = r.get<float>();
    row.y = r.get<float>();
    row.z = r.get<float>();
  }
  return out;
}

void write_point_cloud(const fs::path &path, const std::vector<Vec3> &points,
                       const std::vector<Vec3> &colors) {
  if (points.size() != colors.size()) throw Error("point cloud: colors do not match points");
  std::string s;
  char buf[160];
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g %.6g %.6g %.6g\n", points[i].x(), points[i].y(),
                  points[i].z(), colors[i].x(), colors[i].y(), colors[i].z());
    s += buf;
  }
  write_file(path, s);
}

void read_point_cloud(const fs::path &path, std::vector<Vec3> &points, std::vector<Vec3> &colors) {
  points.clear();
  colors.clear();
  const auto lines = data_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::istringstream is(lines[i]);
    Vec3 p, c;
    if (!(is >> p.x() >> p.y() >> p.z() >> c.x() >> c.y() >> c.z()))
      throw Error(path.string() + ":" + std::to_string(i + 1) + ": expected x y z r g b");
    points.push_back(p);
    colors.push_back(c);
  }
}

std::pair<double, double> align_depth_scale_shift(const ImageF &depth, const ImageF &reference) {
  if (depth.width != reference.width || depth.height != reference.height)
    throw Error("align_depth_scale_shift: size mismatch");
  double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < depth.data.size(); ++i) {
    const double x = depth.data[i], y = reference.data[i];
    if (!(x > 0.0) || !(y > 0.0)) continue;
    n += 1;
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double den = n * sxx - sx * sx;
  if (n < 2 || std::abs(den) < 1e-300) throw Error("align_depth_scale_shift: degenerate input");
  const double scale = (n * sxy - sx * sy) / den;
  return {scale, (sy - scale * sx) / n};
}

}  // namespace dgm
