#include "nsgen/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace nsgen {

static_assert(std::endian::native == std::endian::little, "NSF1 I/O assumes a little-endian host");

namespace {

using json = nlohmann::json;

constexpr char kMagic[4] = {'N', 'S', 'F', '1'};
constexpr std::size_t kHeader = 4 + 3 * 4 + 1;

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v;
  std::memcpy(&v, in.data() + at, 4);
  return v;
}

}  // namespace

std::string encode_nsf1(const Nsf1& d) {
  if (d.nx <= 0 || d.ny <= 0) throw FormatError("NSF1 needs positive dimensions");
  const std::size_t nodes = static_cast<std::size_t>(d.nx) * d.ny;
  const std::size_t width = d.dtype == Dtype::f32 ? 4 : 8;
  std::string out;
  out.reserve(kHeader + d.channels.size() * nodes * width);
  out.append(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(d.nx));
  put_u32(out, static_cast<std::uint32_t>(d.ny));
  put_u32(out, static_cast<std::uint32_t>(d.channels.size()));
  out.push_back(static_cast<char>(d.dtype));
  for (const auto& c : d.channels) {
    if (c.rows() != d.ny || c.cols() != d.nx) throw FormatError("NSF1 channel shape mismatch");
    for (int j = 0; j < d.ny; ++j) {
      for (int i = 0; i < d.nx; ++i) {
        char b[8];
        if (d.dtype == Dtype::f32) {
          const float v = static_cast<float>(c(j, i));
          std::memcpy(b, &v, 4);
        } else {
          const double v = c(j, i);
          std::memcpy(b, &v, 8);
        }
        out.append(b, width);
      }
    }
  }
  return out;
}

Nsf1 decode_nsf1(std::string_view in) {
  if (in.size() < kHeader || std::memcmp(in.data(), kMagic, 4) != 0)
    throw FormatError("not an NSF1 stream");
  Nsf1 d;
  d.nx = static_cast<int>(get_u32(in, 4));
  d.ny = static_cast<int>(get_u32(in, 8));
  const std::uint32_t nc = get_u32(in, 12);
  const auto dt = static_cast<std::uint8_t>(in[16]);
  if (dt > 1) throw FormatError("unknown NSF1 dtype " + std::to_string(dt));
  d.dtype = static_cast<Dtype>(dt);
  const std::size_t width = d.dtype == Dtype::f32 ? 4 : 8;
  const std::size_t nodes = static_cast<std::size_t>(d.nx) * d.ny;
  if (in.size() != kHeader + nc * nodes * width)
    throw FormatError("NSF1 payload size does not match its header");
  std::size_t at = kHeader;
  for (std::uint32_t c = 0; c < nc; ++c) {
    Grid2D<double> a(d.ny, d.nx);
    for (int j = 0; j < d.ny; ++j) {
      for (int i = 0; i < d.nx; ++i) {
        if (d.dtype == Dtype::f32) {
          float v;
          std::memcpy(&v, in.data() + at, 4);
          a(j, i) = v;
        } else {
          double v;
          std::memcpy(&v, in.data() + at, 8);
          a(j, i) = v;
        }
        at += width;
      }
    }
    d.channels.push_back(std::move(a));
  }
  return d;
}

Nsf1 to_nsf1(const FlowField<double>& f, Dtype dtype) {
  return {f.grid.nx, f.grid.ny, dtype, {f.u, f.v, f.p}};
}

FlowField<double> field_from_nsf1(const Nsf1& d, double domain_length) {
  if (d.channels.size() < 3) throw FormatError("a flow field needs 3 channels");
  FlowField<double> f;
  f.grid = GridSpec::square(d.nx, domain_length);
  if (d.ny != d.nx) throw FormatError("flow fields must be square");
  f.u = d.channels[0];
  f.v = d.channels[1];
  f.p = d.channels[2];
  return f;
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void save_field(const std::filesystem::path& path, const FlowField<double>& f,
                const BoundarySpec& bc, const std::vector<Shape>& shapes, Dtype dtype) {
  write_file(path, encode_nsf1(to_nsf1(f, dtype)));
  json side = {{"grid", {{"n", f.grid.nx}, {"h", f.grid.h}, {"domain_length", f.grid.domain_length}}},
               {"channels", {"u", "v", "p"}},
               {"bc", to_json(bc)},
               {"shapes", shapes_to_json(shapes)}};
  write_file(path.string() + ".json", side.dump(2));
}

FlowField<double> load_field(const std::filesystem::path& path) {
  double length = 1.0;
  const std::filesystem::path side = path.string() + ".json";
  if (std::filesystem::exists(side))
    length = json::parse(read_file(side)).at("grid").value("domain_length", 1.0);
  return field_from_nsf1(decode_nsf1(read_file(path)), length);
}

// ---------------------------------------------------------------------------

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::string_view in) {
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < in.size(); i += 3) {
    const std::uint32_t n = (static_cast<std::uint8_t>(in[i]) << 16) |
                            (static_cast<std::uint8_t>(in[i + 1]) << 8) |
                            static_cast<std::uint8_t>(in[i + 2]);
    out += kB64[(n >> 18) & 63];
    out += kB64[(n >> 12) & 63];
    out += kB64[(n >> 6) & 63];
    out += kB64[n & 63];
  }
  const std::size_t rest = in.size() - i;
  if (rest > 0) {
    std::uint32_t n = static_cast<std::uint8_t>(in[i]) << 16;
    if (rest == 2) n |= static_cast<std::uint8_t>(in[i + 1]) << 8;
    out += kB64[(n >> 18) & 63];
    out += kB64[(n >> 12) & 63];
    out += rest == 2 ? kB64[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string base64_decode(std::string_view in) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (in.size() % 4 != 0) throw FormatError("base64 length is not a multiple of 4");
  std::string out;
  out.reserve(in.size() / 4 * 3);
  for (std::size_t i = 0; i < in.size(); i += 4) {
    std::uint32_t n = 0;
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = in[i + k];
      if (c == '=' && i + 4 == in.size() && k >= 2) {
        ++pad;
        n <<= 6;
        continue;
      }
      const int v = val(c);
      if (v < 0 || pad > 0) throw FormatError("invalid base64 input");
      n = (n << 6) | static_cast<std::uint32_t>(v);
    }
    out += static_cast<char>((n >> 16) & 255);
    if (pad < 2) out += static_cast<char>((n >> 8) & 255);
    if (pad < 1) out += static_cast<char>(n & 255);
  }
  return out;
}

// ---------------------------------------------------------------------------

json to_json(const EdgeCondition& c) {
  json j = {{"kind", c.is_dirichlet() ? "dirichlet" : "neumann"}};
  if (c.is_dirichlet()) {
    j["value"] = c.value;
    j["segment"] = {c.segment_start, c.segment_end};
    if (!c.profile.empty()) j["profile"] = c.profile;
  }
  return j;
}

EdgeCondition edge_condition_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "neumann") return EdgeCondition::neumann();
  if (kind != "dirichlet") throw BoundaryError("unknown edge condition kind '" + kind + "'");
  EdgeCondition c;
  c.value = j.value("value", 0.0);
  if (j.contains("segment")) {
    c.segment_start = j["segment"].at(0).get<double>();
    c.segment_end = j["segment"].at(1).get<double>();
  }
  if (j.contains("profile")) c.profile = j["profile"].get<std::vector<double>>();
  return c;
}

json to_json(const BoundarySpec& bc) {
  json j = {{"problem", to_string(bc.problem)}, {"nu", bc.nu}, {"pressure_pin", bc.pressure_pin}};
  if (bc.lid)
    j["lid"] = {{"velocity", bc.lid->velocity},
                {"start", bc.lid->start_fraction},
                {"extent", bc.lid->extent_fraction}};
  if (bc.inlet) j["inlet"] = {{"u0", bc.inlet->u0}, {"v0", bc.inlet->v0}};
  json edges = json::object();
  for (Edge e : kAllEdges) {
    json ej = json::object();
    for (Var v : kAllVars) ej[to_string(v)] = to_json(bc.at(e, v));
    edges[to_string(e)] = ej;
  }
  j["edges"] = edges;
  return j;
}

BoundarySpec boundary_spec_from_json(const json& j) {
  const Problem p = problem_from_string(j.value("problem", std::string("custom")));
  const double nu = j.value("nu", 0.05);
  if (!j.contains("edges")) {
    // Short form: only the physical parameters.
    if (p == Problem::cavity) {
      const auto& lid = j.at("lid");
      return cavity_bc(lid.at("velocity").get<double>(), lid.value("start", 0.0),
                       lid.value("extent", 1.0), nu);
    }
    if (p == Problem::internal)
      return internal_bc(j.at("inlet").at("u0").get<double>(), j.at("inlet").at("v0").get<double>(),
                         nu);
    throw BoundaryError("custom boundary spec needs explicit edges");
  }
  BoundarySpec bc;
  bc.problem = p;
  bc.nu = nu;
  bc.pressure_pin = j.value("pressure_pin", false);
  if (j.contains("lid"))
    bc.lid = LidParams{j["lid"].at("velocity").get<double>(), j["lid"].value("start", 0.0),
                       j["lid"].value("extent", 1.0)};
  if (j.contains("inlet"))
    bc.inlet = InletParams{j["inlet"].at("u0").get<double>(), j["inlet"].at("v0").get<double>()};
  for (Edge e : kAllEdges)
    for (Var v : kAllVars)
      bc.at(e, v) = edge_condition_from_json(j.at("edges").at(to_string(e)).at(to_string(v)));
  bc.validate();
  return bc;
}

json to_json(const Shape& s) {
  if (const auto* r = std::get_if<Rect>(&s))
    return {{"type", "rect"}, {"x", r->x}, {"y", r->y}, {"width", r->width}, {"height", r->height}};
  const auto& c = std::get<Circle>(s);
  return {{"type", "circle"}, {"cx", c.cx}, {"cy", c.cy}, {"radius", c.radius}};
}

Shape shape_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "rect")
    return Rect{j.at("x").get<double>(), j.at("y").get<double>(), j.at("width").get<double>(),
                j.at("height").get<double>()};
  if (type == "circle")
    return Circle{j.at("cx").get<double>(), j.at("cy").get<double>(), j.at("radius").get<double>()};
  throw ShapeError("unknown shape type '" + type + "'");
}

json shapes_to_json(const std::vector<Shape>& shapes) {
  json a = json::array();
  for (const auto& s : shapes) a.push_back(to_json(s));
  return a;
}

std::vector<Shape> shapes_from_json(const json& j) {
  std::vector<Shape> out;
  for (const auto& s : j) out.push_back(shape_from_json(s));
  return out;
}

json to_json(const LossWeights& w) {
  return {{"lambda_1", w.lambda_1}, {"lambda_2", w.lambda_2}, {"lambda_3", w.lambda_3},
          {"lambda_N", w.lambda_N}, {"lambda_b", w.lambda_b}};
}

LossWeights loss_weights_from_json(const json& j) {
  LossWeights w;
  w.lambda_1 = j.value("lambda_1", 1.0);
  w.lambda_2 = j.value("lambda_2", 1.0);
  w.lambda_3 = j.value("lambda_3", 1.0);
  w.lambda_N = j.value("lambda_N", 1.0);
  w.lambda_b = j.value("lambda_b", 1.0);
  return w;
}

json to_json(const ModelConfig& c) {
  return {{"input_size", c.input_size},
          {"in_channels", c.in_channels},
          {"base_width", c.base_width},
          {"max_width", c.max_width},
          {"depth", c.depth()},
          {"channel_scales", c.channel_scales},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.input_size = j.at("input_size").get<int>();
  c.in_channels = j.at("in_channels").get<int>();
  c.base_width = j.at("base_width").get<int>();
  c.max_width = j.value("max_width", 512);
  c.channel_scales = j.at("channel_scales").get<std::array<double, 3>>();
  c.seed = j.value("seed", std::uint64_t{0});
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  std::filesystem::create_directories(dir);
  UNet<float> model = ckpt.model.cast<float>();
  std::string blob;
  json index = json::array();
  for (const auto& p : model.params()) {
    index.push_back({{"name", p.name},
                     {"shape", {p.rows, p.cols}},
                     {"offset", blob.size()},
                     {"count", p.size()},
                     {"trainable", p.trainable()}});
    blob.append(reinterpret_cast<const char*>(p.data),
                static_cast<std::size_t>(p.size()) * sizeof(float));
  }
  const auto& m = ckpt.meta;
  json ranges = json::object();
  for (const auto& [k, r] : m.ranges) ranges[k] = r;
  json manifest = {{"format_version", Checkpoint::kFormatVersion},
                   {"config", to_json(model.config())},
                   {"parameter_count", model.parameter_count()},
                   {"metadata",
                    {{"stage", m.stage},
                     {"problem", m.problem},
                     {"input_recipe", m.input_recipe},
                     {"epoch", m.epoch},
                     {"loss_digest", m.loss_digest},
                     {"lambdas", to_json(m.lambdas)},
                     {"ranges", ranges},
                     {"max_obstacles", m.max_obstacles},
                     {"extra", m.extra}}},
                   {"params", index}};
  write_file(dir / "params.bin", blob);
  write_file(dir / "manifest.json", manifest.dump(2));
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const json manifest = json::parse(read_file(dir / "manifest.json"));
  const int version = manifest.at("format_version").get<int>();
  if (version != Checkpoint::kFormatVersion)
    throw FormatError("unsupported checkpoint format version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.model = UNet<float>(model_config_from_json(manifest.at("config")));
  const std::string blob = read_file(dir / "params.bin");
  auto params = ckpt.model.params();
  const auto& index = manifest.at("params");
  if (index.size() != params.size()) throw FormatError("checkpoint parameter index mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& e = index[k];
    auto& p = params[k];
    if (e.at("name").get<std::string>() != p.name ||
        e.at("count").get<Eigen::Index>() != p.size())
      throw FormatError("checkpoint tensor " + e.at("name").get<std::string>() +
                        " does not match the configured model");
    const std::size_t off = e.at("offset").get<std::size_t>();
    const std::size_t bytes = static_cast<std::size_t>(p.size()) * sizeof(float);
    if (off + bytes > blob.size()) throw FormatError("checkpoint blob truncated");
    std::memcpy(p.data, blob.data() + off, bytes);
  }
  const json& md = manifest.at("metadata");
  auto& m = ckpt.meta;
  m.stage = md.value("stage", std::string());
  m.problem = md.value("problem", std::string("cavity"));
  m.input_recipe = md.value("input_recipe", std::string());
  m.epoch = md.value("epoch", 0);
  m.loss_digest = md.value("loss_digest", std::string());
  m.lambdas = loss_weights_from_json(md.at("lambdas"));
  for (const auto& [k, r] : md.at("ranges").items()) m.ranges[k] = r.get<std::array<double, 2>>();
  m.max_obstacles = md.value("max_obstacles", 0);
  m.extra = md.value("extra", json::object());
  return ckpt;
}

std::string digest_series(const std::vector<double>& values) {
  std::uint64_t h = 1469598103934665603ULL;
  for (double v : values) {
    unsigned char b[8];
    std::memcpy(b, &v, 8);
    for (unsigned char c : b) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace nsgen
