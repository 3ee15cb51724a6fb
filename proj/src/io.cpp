#include "statgeo/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace statgeo {

namespace {

[[noreturn]] void parse_error(const std::string& what) { throw Error(ErrorCode::ParseError, what); }

template <typename F>
auto guard_json(const char* context, F&& fn) {
  try {
    return fn();
  } catch (const nlohmann::json::exception& e) {
    parse_error(std::string(context) + ": " + e.what());
  }
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

Json vector_to_json(const Vec& v) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

Vec vector_from_json(const Json& j) {
  return guard_json("vector", [&] {
    if (!j.is_array()) parse_error("expected an array of numbers");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    return v;
  });
}

Json matrix_to_json(const Mat& m) {
  Json j = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) j.push_back(vector_to_json(m.row(r).transpose()));
  return j;
}

Mat matrix_from_json(const Json& j) {
  if (!j.is_array()) parse_error("expected an array of rows");
  if (j.empty()) return Mat(0, 0);
  const Eigen::Index cols = static_cast<Eigen::Index>(j[0].size());
  Mat m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Vec row = vector_from_json(j[r]);
    if (row.size() != cols) parse_error("ragged matrix rows");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

Json decoder_to_json(const DecoderMap& dec, std::optional<std::uint64_t> seed) {
  Json j;
  j["latent_dim"] = dec.latent_dim();
  j["feature_count"] = dec.feature_count();
  j["family"] = std::string(family_name(dec.family()));
  Json heads = Json::array();
  for (const auto& head : dec.heads()) {
    Json layers = Json::array();
    for (const auto& layer : head.layers) {
      Json l;
      l["rows"] = layer.weight.rows();
      l["cols"] = layer.weight.cols();
      Json w = Json::array();
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) w.push_back(layer.weight(r, c));
      }
      l["weight"] = std::move(w);
      l["bias"] = vector_to_json(layer.bias);
      l["activation"] = activation_name(layer.activation);
      layers.push_back(std::move(l));
    }
    heads.push_back(Json{{"name", head.name}, {"layers", std::move(layers)}});
  }
  j["heads"] = std::move(heads);
  if (const auto& reg = dec.regularization()) {
    Json r;
    r["centers"] = matrix_to_json(reg->centers);
    r["beta"] = reg->beta;
    r["c"] = reg->c;
    Json ex = Json::array();
    for (const auto& p : reg->extrapolation) ex.push_back(vector_to_json(p.values()));
    r["extrapolation"] = std::move(ex);
    j["regularization"] = std::move(r);
  }
  if (seed) j["seed"] = *seed;
  return j;
}

DecoderMap decoder_from_json(const Json& j) {
  return guard_json("decoder", [&] {
    const auto latent = j.at("latent_dim").get<Eigen::Index>();
    const auto features = j.at("feature_count").get<Eigen::Index>();
    const FamilyKind family = parse_family(j.at("family").get<std::string>());
    std::vector<Head> heads;
    for (const auto& h : j.at("heads")) {
      Head head{h.at("name").get<std::string>(), {}};
      for (const auto& l : h.at("layers")) {
        const auto rows = l.at("rows").get<Eigen::Index>();
        const auto cols = l.at("cols").get<Eigen::Index>();
        const Vec flat = vector_from_json(l.at("weight"));
        if (rows < 1 || cols < 1 || flat.size() != rows * cols) parse_error("layer weight length must equal rows x cols");
        Mat w(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r) w.row(r) = flat.segment(r * cols, cols).transpose();
        const Vec bias = vector_from_json(l.at("bias"));
        if (bias.size() != rows) parse_error("layer bias length must equal rows");
        head.layers.push_back({std::move(w), bias, parse_activation(l.at("activation").get<std::string>())});
      }
      heads.push_back(std::move(head));
    }
    std::optional<UncertaintyReg> reg;
    if (j.contains("regularization") && !j["regularization"].is_null()) {
      const auto& r = j["regularization"];
      UncertaintyReg u;
      u.centers = matrix_from_json(r.at("centers"));
      u.beta = r.at("beta").get<double>();
      u.c = r.value("c", 7.0);
      for (const auto& e : r.at("extrapolation")) u.extrapolation.push_back(ParamPoint(family, vector_from_json(e)));
      reg = std::move(u);
    }
    return DecoderMap(latent, features, family, std::move(heads), std::move(reg));
  });
}

DecoderMap load_decoder(const std::string& path) { return decoder_from_json(parse_json(read_text(path))); }

void save_decoder(const std::string& path, const DecoderMap& dec, std::optional<std::uint64_t> seed) {
  write_text(path, dump_json(decoder_to_json(dec, seed)));
}

std::string codes_to_csv(const Mat& codes) {
  std::string out;
  for (Eigen::Index k = 0; k < codes.cols(); ++k) out += (k ? ",z" : "z") + std::to_string(k);
  out += '\n';
  for (Eigen::Index r = 0; r < codes.rows(); ++r) {
    for (Eigen::Index k = 0; k < codes.cols(); ++k) {
      if (k) out += ',';
      out += format_double(codes(r, k));
    }
    out += '\n';
  }
  return out;
}

Mat codes_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) parse_error("codes file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  Eigen::Index cols = 0;
  {
    std::istringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ',')) {
      if (cell != "z" + std::to_string(cols)) parse_error("codes header must be z0,z1,...");
      ++cols;
    }
  }
  if (cols == 0) parse_error("codes header has no columns");
  std::vector<double> values;
  Eigen::Index rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    Eigen::Index k = 0;
    while (std::getline(row, cell, ',')) {
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) parse_error("bad number in codes file: " + cell);
      values.push_back(v);
      ++k;
    }
    if (k != cols) parse_error("codes file is not rectangular");
    ++rows;
  }
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index k = 0; k < cols; ++k) m(r, k) = values[static_cast<std::size_t>(r * cols + k)];
  }
  return m;
}

Mat load_codes(const std::string& path) { return codes_from_csv(read_text(path)); }

void save_codes(const std::string& path, const Mat& codes) { write_text(path, codes_to_csv(codes)); }

Json grid_to_json(const MetricGrid& grid) {
  Json j;
  j["lower"] = vector_to_json(grid.lower);
  j["upper"] = vector_to_json(grid.upper);
  j["resolution"] = grid.resolution;
  j["bandwidth"] = grid.bandwidth;
  j["points"] = matrix_to_json(grid.points);
  Json tensors = Json::array();
  Json lsd = Json::array();
  for (const auto& t : grid.tensors) {
    Json flat = Json::array();
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) flat.push_back(t(r, c));
    }
    tensors.push_back(std::move(flat));
    Eigen::LLT<Mat> llt(t);
    lsd.push_back(llt.info() == Eigen::Success ? llt.matrixLLT().diagonal().array().log().sum()
                                               : std::numeric_limits<double>::quiet_NaN());
  }
  j["tensors"] = std::move(tensors);
  j["log_sqrt_det"] = std::move(lsd);
  return j;
}

MetricGrid grid_from_json(const Json& j) {
  return guard_json("grid", [&] {
    MetricGrid g;
    g.lower = vector_from_json(j.at("lower"));
    g.upper = vector_from_json(j.at("upper"));
    g.resolution = j.at("resolution").get<std::vector<Eigen::Index>>();
    g.bandwidth = j.at("bandwidth").get<double>();
    g.points = lattice_points(g.lower, g.upper, g.resolution);
    const Eigen::Index d = g.dim();
    const auto& tensors = j.at("tensors");
    if (static_cast<Eigen::Index>(tensors.size()) != g.points.rows()) parse_error("grid tensor count must match the lattice");
    for (const auto& t : tensors) {
      const Vec flat = vector_from_json(t);
      if (flat.size() != d * d) parse_error("grid tensors must be d x d row-major arrays");
      Mat m(d, d);
      for (Eigen::Index r = 0; r < d; ++r) m.row(r) = flat.segment(r * d, d).transpose();
      g.tensors.push_back(m);
    }
    if (!(g.bandwidth > 0)) parse_error("grid bandwidth must be > 0");
    return g;
  });
}

Json land_to_json(const LandModel& model, const std::string& metric_ref) {
  Json j;
  j["mean"] = vector_to_json(model.mean);
  j["precision"] = matrix_to_json(model.precision);
  j["norm_const"] = model.norm_const;
  j["norm_std_error"] = model.norm_std_error;
  j["seed"] = model.config.seed;
  j["metric_ref"] = metric_ref;
  return j;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) parse_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) parse_error("cannot write " + path);
  out << text;
  if (!out) parse_error("failed writing " + path);
}

Json parse_json(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    parse_error(std::string("invalid JSON: ") + e.what());
  }
}

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace statgeo
