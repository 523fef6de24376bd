#include "dgm/checkpoint.hpp"

#include "binary.hpp"
#include "dgm/config.hpp"

#include <array>
#include <fstream>
#include <sstream>

namespace dgm {

namespace {

constexpr char kMagic[8] = {'D', 'G', 'M', 'C', 'K', 'P', 'T', 0};

void put_vec3s(bin::Writer &w, const std::vector<Vec3> &v) {
  w.put(static_cast<std::uint64_t>(v.size()));
  for (const Vec3 &x : v) w.put_vec3(x);
}
void put_doubles(bin::Writer &w, const std::vector<double> &v) {
  w.put(static_cast<std::uint64_t>(v.size()));
  for (double x : v) w.put(x);
}
std::vector<Vec3> get_vec3s(bin::Reader &r) {
  const auto n = r.get<std::uint64_t>();
  r.check_count(n, 24);
  std::vector<Vec3> v(n);
  for (Vec3 &x : v) x = r.get_vec3();
  return v;
}
std::vector<double> get_doubles(bin::Reader &r) {
  const auto n = r.get<std::uint64_t>();
  r.check_count(n, 8);
  std::vector<double> v(n);
  for (double &x : v) x = r.get<double>();
  return v;
}

void put_camera(bin::Writer &w, const Camera &c) {
  for (double v : {c.fx, c.fy, c.cx, c.cy}) w.put(v);
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 3; ++k) w.put(c.rotation(r, k));
  w.put_vec3(c.translation);
  w.put(static_cast<std::int32_t>(c.width));
  w.put(static_cast<std::int32_t>(c.height));
}

Camera get_camera(bin::Reader &r) {
  Camera c;
  c.fx = r.get<double>();
  c.fy = r.get<double>();
  c.cx = r.get<double>();
  c.cy = r.get<double>();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) c.rotation(i, k) = r.get<double>();
  c.translation = r.get_vec3();
  c.width = r.get<std::int32_t>();
  c.height = r.get<std::int32_t>();
  return c;
}

std::string ladder_section(const TrainState &state) {
  bin::Writer w;
  w.put(static_cast<std::uint64_t>(state.ladder.size()));
  for (const SetState &s : state.ladder) {
    w.put(static_cast<std::int32_t>(s.set.first_frame));
    w.put(static_cast<std::int32_t>(s.set.last_frame));
    w.put(static_cast<std::uint64_t>(s.set.size()));
    for (const Marble &m : s.set.marbles) {
      w.put_vec3(m.mu);
      w.put(m.log_scale);
      w.put_vec3(m.color);
      w.put(m.opacity_logit);
      w.put(static_cast<std::int32_t>(m.instance));
      for (const Vec3 &d : m.delta_x) w.put_vec3(d);
    }
    w.put(static_cast<std::int32_t>(s.graph.k));
    w.put(static_cast<std::uint64_t>(s.graph.neighbors.size()));
    for (std::int32_t n : s.graph.neighbors) w.put(n);
    const AdamState &a = s.adam;
    w.put(static_cast<std::int32_t>(a.length));
    put_vec3s(w, a.m_mu);
    put_vec3s(w, a.v_mu);
    put_vec3s(w, a.m_dx);
    put_vec3s(w, a.v_dx);
    put_doubles(w, a.m_scale);
    put_doubles(w, a.v_scale);
    put_vec3s(w, a.m_color);
    put_vec3s(w, a.v_color);
    put_doubles(w, a.m_opacity);
    put_doubles(w, a.v_opacity);
    for (auto st : a.steps) w.put(st);
    w.put(static_cast<std::uint64_t>(a.dx_steps.size()));
    for (auto st : a.dx_steps) w.put(st);
  }
  return w.data();
}

void read_ladder(bin::Reader &r, TrainState &state) {
  const auto count = r.get<std::uint64_t>();
  r.check_count(count, 16);
  state.ladder.resize(count);
  for (SetState &s : state.ladder) {
    s.set.first_frame = r.get<std::int32_t>();
    s.set.last_frame = r.get<std::int32_t>();
    if (s.set.last_frame < s.set.first_frame) throw Error("checkpoint: invalid set interval");
    const auto n = r.get<std::uint64_t>();
    const std::size_t len = static_cast<std::size_t>(s.set.length());
    r.check_count(n, 68 + 24 * len);
    s.set.marbles.resize(n);
    for (Marble &m : s.set.marbles) {
      m.mu = r.get_vec3();
      m.log_scale = r.get<double>();
      m.color = r.get_vec3();
      m.opacity_logit = r.get<double>();
      m.instance = r.get<std::int32_t>();
      m.delta_x.resize(len);
      for (Vec3 &d : m.delta_x) d = r.get_vec3();
    }
    s.graph.k = r.get<std::int32_t>();
    const auto nn = r.get<std::uint64_t>();
    r.check_count(nn, 4);
    s.graph.neighbors.resize(nn);
    for (auto &v : s.graph.neighbors) v = r.get<std::int32_t>();
    AdamState &a = s.adam;
    a.length = r.get<std::int32_t>();
    a.m_mu = get_vec3s(r);
    a.v_mu = get_vec3s(r);
    a.m_dx = get_vec3s(r);
    a.v_dx = get_vec3s(r);
    a.m_scale = get_doubles(r);
    a.v_scale = get_doubles(r);
    a.m_color = get_vec3s(r);
    a.v_color = get_vec3s(r);
    a.m_opacity = get_doubles(r);
    a.v_opacity = get_doubles(r);
    for (auto &st : a.steps) st = r.get<std::int64_t>();
    const auto ns = r.get<std::uint64_t>();
    r.check_count(ns, 8);
    a.dx_steps.resize(ns);
    for (auto &st : a.dx_steps) st = r.get<std::int64_t>();
    if (!a.matches(s.set)) throw Error("checkpoint: optimizer state does not match its set");
    if (s.graph.k < 0 || (s.graph.k > 0 && s.graph.neighbors.size() != s.set.size() * s.graph.k))
      throw Error("checkpoint: neighbor graph does not match its set");
  }
}

}  // namespace

std::string serialize_checkpoint(const TrainState &state) {
  RunConfig rc;
  rc.train = state.config;
  const std::string config = format_config(rc);

  bin::Writer st;
  st.put(static_cast<std::int32_t>(state.num_frames));
  st.put(static_cast<std::int32_t>(state.level));
  st.put(static_cast<std::int32_t>(state.level_length));
  st.put(static_cast<std::int64_t>(state.iterations));
  st.put(static_cast<std::uint8_t>(state.finished ? 1 : 0));

  bin::Writer cams;
  cams.put(static_cast<std::uint64_t>(state.cameras.size()));
  for (const Camera &c : state.cameras) put_camera(cams, c);

  const std::array<std::pair<const char *, std::string>, 4> sections = {
      {{"config", config}, {"state", st.data()}, {"ladder", ladder_section(state)},
       {"cameras", cams.data()}}};

  bin::Writer w;
  w.put_bytes(std::string_view(kMagic, 8));
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint32_t>(sections.size()));
  std::uint64_t offset = 8 + 4 + 4 + sections.size() * (16 + 8 + 8 + 8);
  for (const auto &[name, payload] : sections) {
    char padded[16] = {};
    std::snprintf(padded, sizeof padded, "%s", name);
    w.put_bytes(std::string_view(padded, 16));
    w.put(offset);
    w.put(static_cast<std::uint64_t>(payload.size()));
    w.put(fnv1a(payload));
    offset += payload.size();
  }
  for (const auto &[name, payload] : sections) w.put_bytes(payload);
  return w.data();
}

TrainState deserialize_checkpoint(const std::string &bytes, const std::string &source) {
  bin::Reader r(bytes, source);
  if (r.get_bytes(8) != std::string_view(kMagic, 8)) throw Error(source + ": not a checkpoint file");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw Error(source + ": unsupported checkpoint version " + std::to_string(version));
  const auto nsec = r.get<std::uint32_t>();
  r.check_count(nsec, 40);
  std::string config, state_bytes, ladder, cameras;
  bool have[4] = {false, false, false, false};
  for (std::uint32_t i = 0; i < nsec; ++i) {
    const std::string_view raw = r.get_bytes(16);
    const std::string name(raw.data(), strnlen(raw.data(), 16));
    const auto off = r.get<std::uint64_t>(), size = r.get<std::uint64_t>(), sum = r.get<std::uint64_t>();
    if (off > bytes.size() || size > bytes.size() - off) throw Error(source + ": truncated checkpoint");
    std::string payload = bytes.substr(off, size);
    if (fnv1a(payload) != sum) throw Error(source + ": checksum mismatch in section " + name);
    if (name == "config") config = std::move(payload), have[0] = true;
    else if (name == "state") state_bytes = std::move(payload), have[1] = true;
    else if (name == "ladder") ladder = std::move(payload), have[2] = true;
    else if (name == "cameras") cameras = std::move(payload), have[3] = true;
  }
  if (!have[0] || !have[1] || !have[2] || !have[3]) throw Error(source + ": missing checkpoint section");

  TrainState state;
  RunConfig rc;
  apply_config_text(rc, config, source + " [config]");
  state.config = rc.train;
  bin::Reader sr(state_bytes, source + " [state]");
  state.num_frames = sr.get<std::int32_t>();
  state.level = sr.get<std::int32_t>();
  state.level_length = sr.get<std::int32_t>();
  state.iterations = sr.get<std::int64_t>();
  state.finished = sr.get<std::uint8_t>() != 0;
  bin::Reader lr(ladder, source + " [ladder]");
  read_ladder(lr, state);
  bin::Reader cr(cameras, source + " [cameras]");
  const auto ncam = cr.get<std::uint64_t>();
  cr.check_count(ncam, 8 * 16 + 8);
  state.cameras.resize(ncam);
  for (Camera &c : state.cameras) c = get_camera(cr);
  if (lr.remaining() != 0 || sr.remaining() != 0 || cr.remaining() != 0) throw Error(source + ": trailing bytes in section");
  try {
    state.validate();
  } catch (const Error &e) {
    throw Error(source + ": " + e.what());
  }
  return state;
}

void save_checkpoint(const std::filesystem::path &path, const TrainState &state) {
  const std::string bytes = serialize_checkpoint(state);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str(), path.string());
}

}  // namespace dgm
