#include "marca/io.hpp"

#include <bit>
#include <cerrno>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "marca/errors.hpp"

namespace marca::io {

using nlohmann::json;

namespace {

constexpr std::size_t kHeaderBytes = 4 + 1 + 8 + 8;

void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b)
    out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}

std::uint64_t get_u64(std::string_view in, std::size_t offset) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b)
    v |= std::uint64_t(static_cast<unsigned char>(in[offset + b])) << (8 * b);
  return v;
}

bool has_csv_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(c));
  return ext == ".csv";
}

json schema_to_json(const AttributeSchema& schema) {
  json attrs = json::array();
  for (const auto& a : schema.attributes())
    attrs.push_back({{"name", a.name}, {"instantiations", a.instantiations}});
  return json{{"attributes", attrs}};
}

AttributeSchema schema_from_json(const json& j) {
  std::vector<Attribute> attrs;
  for (const auto& a : j.at("attributes")) {
    Attribute attr;
    attr.name = a.at("name").get<std::string>();
    attr.instantiations = a.at("instantiations").get<std::vector<std::string>>();
    attrs.push_back(std::move(attr));
  }
  return AttributeSchema(std::move(attrs));
}

json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(what + ": malformed JSON: " + e.what());
  }
}

template <class F>
auto with_json_errors(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw InvalidArgument(what + ": " + e.what());
  }
}

/// Stacks selector blocks side by side: block i occupies M_i columns and the
/// top M_i rows of a (max M) x (sum M) matrix.
Matrix pack_selectors(const SelectorBank& bank) {
  Index rows = 0, cols = 0;
  for (const auto& s : bank.selectors) {
    rows = std::max(rows, s.rows());
    cols += s.cols();
  }
  Matrix packed = Matrix::Zero(rows, cols);
  Index offset = 0;
  for (const auto& s : bank.selectors) {
    packed.block(0, offset, s.rows(), s.cols()) = s;
    offset += s.cols();
  }
  return packed;
}

SelectorBank unpack_selectors(const Matrix& packed,
                              const AttributeSchema& schema) {
  SelectorBank bank;
  Index offset = 0;
  for (Index i = 0; i < schema.size(); ++i) {
    const Index m = schema.instantiation_count(i);
    if (packed.rows() < m || offset + m > packed.cols())
      throw InvalidArgument("selector file does not match schema");
    bank.selectors.push_back(packed.block(0, offset, m, m));
    offset += m;
  }
  if (offset != packed.cols())
    throw InvalidArgument("selector file does not match schema");
  return bank;
}

json config_to_json(const SolverConfig& c) {
  json j{{"eps", c.eps},
         {"t_max", c.t_max},
         {"rho", c.rho},
         {"mu_max", c.mu_max},
         {"mu0_scale", c.mu0_scale},
         {"seed", c.seed},
         {"mu0_norm", to_string(c.mu0_norm)},
         {"convergence",
          c.convergence == ResidualForm::Constraint ? "constraint" : "masked"}};
  j["lambda"] = c.lambda ? json(*c.lambda) : json(nullptr);
  return j;
}

SolverConfig config_from_json(const json& j) {
  SolverConfig c;
  if (!j.at("lambda").is_null()) c.lambda = j.at("lambda").get<double>();
  c.eps = j.at("eps").get<double>();
  c.t_max = j.at("t_max").get<int>();
  c.rho = j.at("rho").get<double>();
  c.mu_max = j.at("mu_max").get<double>();
  c.mu0_scale = j.at("mu0_scale").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.mu0_norm = parse_mu0_norm(j.at("mu0_norm").get<std::string>());
  const auto conv = j.at("convergence").get<std::string>();
  if (conv != "constraint" && conv != "masked")
    throw InvalidArgument("config: unknown convergence '" + conv + "'");
  c.convergence =
      conv == "constraint" ? ResidualForm::Constraint : ResidualForm::Masked;
  return c;
}

json rule_to_json(const proxops::RankRule& r) {
  return {{"kind", r.kind == proxops::RankRule::Kind::Explicit ? "explicit"
                                                               : "energy"},
          {"rank", r.rank},
          {"fraction", r.fraction}};
}

proxops::RankRule rule_from_json(const json& j) {
  proxops::RankRule r;
  const auto kind = j.at("kind").get<std::string>();
  r.kind = kind == "explicit" ? proxops::RankRule::Kind::Explicit
                              : proxops::RankRule::Kind::Energy;
  r.rank = j.at("rank").get<Index>();
  r.fraction = j.at("fraction").get<double>();
  return r;
}

fs::path basis_file(Index i) { return "basis_" + std::to_string(i) + ".marc"; }

}  // namespace

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error reading '" + path.string() + "'");
  return ss.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("error writing '" + path.string() + "'");
}

std::string encode_matrix(const Matrix& m) {
  std::string out;
  out.reserve(kHeaderBytes + 8 * static_cast<std::size_t>(m.size()));
  out.append(kMatrixMagic);
  out.push_back(static_cast<char>(kMatrixVersion));
  put_u64(out, static_cast<std::uint64_t>(m.rows()));
  put_u64(out, static_cast<std::uint64_t>(m.cols()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      put_u64(out, std::bit_cast<std::uint64_t>(m(i, j)));
  return out;
}

Matrix decode_matrix(std::string_view bytes) {
  if (bytes.size() < kHeaderBytes || bytes.substr(0, 4) != kMatrixMagic)
    throw InvalidArgument("not a MARC matrix file");
  if (static_cast<unsigned char>(bytes[4]) != kMatrixVersion)
    throw InvalidArgument("unsupported MARC format version " +
                          std::to_string(static_cast<unsigned char>(bytes[4])));
  const std::uint64_t rows = get_u64(bytes, 5);
  const std::uint64_t cols = get_u64(bytes, 13);
  if (rows == 0 || cols == 0)
    throw InvalidArgument("MARC matrix must have at least one row and column");
  if (rows > (bytes.size() - kHeaderBytes) / 8 / cols ||
      bytes.size() != kHeaderBytes + 8 * rows * cols)
    throw InvalidArgument("MARC payload size does not match " +
                          std::to_string(rows) + "x" + std::to_string(cols));
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  std::size_t offset = kHeaderBytes;
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j, offset += 8)
      m(i, j) = std::bit_cast<double>(get_u64(bytes, offset));
  return m;
}

std::string encode_csv(const Matrix& m) {
  std::string out;
  char buf[32];
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out.push_back(',');
      const int n = std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      out.append(buf, static_cast<std::size_t>(n));
    }
    out.push_back('\n');
  }
  return out;
}

Matrix decode_csv(std::string_view text) {
  std::vector<std::vector<double>> rows;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(pos, end - pos));
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const char* begin = cell.c_str();
      char* stop = nullptr;
      errno = 0;
      const double v = std::strtod(begin, &stop);
      while (*stop == ' ' || *stop == '\t') ++stop;
      if (stop == begin || *stop != '\0')
        throw InvalidArgument("CSV: cannot parse '" + cell + "' on row " +
                              std::to_string(rows.size() + 1));
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw InvalidArgument("CSV: ragged row " + std::to_string(rows.size() + 1));
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows.front().empty())
    throw InvalidArgument("CSV: empty matrix");
  Matrix m(static_cast<Index>(rows.size()),
           static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
  return m;
}

void write_matrix(const fs::path& path, const Matrix& m) {
  write_file(path, has_csv_extension(path) ? encode_csv(m) : encode_matrix(m));
}

Matrix read_matrix(const fs::path& path) {
  const std::string bytes = read_file(path);
  try {
    return has_csv_extension(path) ? decode_csv(bytes) : decode_matrix(bytes);
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

Vector read_vector(const fs::path& path) {
  const Matrix m = read_matrix(path);
  if (m.cols() == 1) return m.col(0);
  if (m.rows() == 1) return m.row(0).transpose();
  throw InvalidArgument(path.string() + ": expected a vector, got " +
                        std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()));
}

void write_vector(const fs::path& path, const Vector& v) {
  write_matrix(path, Matrix(v));
}

Matrix read_mask(const fs::path& path) {
  Matrix m = read_matrix(path);
  require_binary(m, path.string().c_str());
  return m;
}

std::string dump_schema(const AttributeSchema& schema) {
  return schema_to_json(schema).dump(2);
}

AttributeSchema parse_schema(std::string_view json_text) {
  const json j = parse_json(json_text, "schema");
  return with_json_errors("schema", [&] { return schema_from_json(j); });
}

Manifest parse_manifest(std::string_view json_text) {
  const json j = parse_json(json_text, "manifest");
  return with_json_errors("manifest", [&] {
    Manifest m;
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != Manifest::kFormatVersion)
      throw InvalidArgument("manifest: unsupported format_version " +
                            std::to_string(m.format_version));
    m.schema = schema_from_json(j.at("schema"));
    const auto& samples = j.at("samples");
    for (std::size_t k = 0; k < samples.size(); ++k) {
      const auto& s = samples[k];
      ManifestSample ms;
      ms.data = s.at("data").get<std::string>();
      if (s.contains("mask") && !s.at("mask").is_null())
        ms.mask = fs::path(s.at("mask").get<std::string>());
      if (s.contains("labels"))
        ms.labels = s.at("labels").get<std::map<std::string, std::string>>();

      const std::string where =
          "sample " + std::to_string(k) + " (" + ms.data.string() + ")";
      for (const auto& [attr, label] : ms.labels) {
        const auto i = m.schema.find_attribute(attr);
        if (!i)
          throw InvalidArgument(where + ": unknown attribute '" + attr + "'");
        if (!m.schema.find_instantiation(*i, label))
          throw InvalidArgument(where + ": unknown instantiation '" + label +
                                "' for attribute '" + attr + "'");
      }
      for (const auto& a : m.schema.attributes())
        if (!ms.labels.count(a.name))
          throw InvalidArgument(where + ": missing label for attribute '" +
                                a.name + "'");
      m.samples.push_back(std::move(ms));
    }
    if (m.samples.empty()) throw InvalidArgument("manifest: no samples");
    return m;
  });
}

std::string dump_manifest(const Manifest& manifest) {
  json samples = json::array();
  for (const auto& s : manifest.samples) {
    json js{{"data", s.data.generic_string()}, {"labels", s.labels}};
    if (s.mask) js["mask"] = s.mask->generic_string();
    samples.push_back(std::move(js));
  }
  json j{{"format_version", manifest.format_version},
         {"schema", schema_to_json(manifest.schema)},
         {"samples", samples}};
  return j.dump(2);
}

Manifest read_manifest(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return parse_manifest(text);
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  write_file(path, dump_manifest(manifest));
}

TrainingSet load_training_set(const fs::path& manifest_path) {
  const Manifest manifest = read_manifest(manifest_path);
  const fs::path base = manifest_path.parent_path();
  auto resolve = [&](const fs::path& p) {
    return p.is_absolute() ? p : base / p;
  };
  std::vector<Sample> samples;
  samples.reserve(manifest.samples.size());
  for (std::size_t k = 0; k < manifest.samples.size(); ++k) {
    const auto& ms = manifest.samples[k];
    Sample s;
    s.x = read_vector(resolve(ms.data));
    if (ms.mask) {
      const fs::path mask_path = resolve(*ms.mask);
      s.w = read_vector(mask_path);
      require_binary(s.w, mask_path.string().c_str());
    } else {
      s.w = Vector::Ones(s.x.size());
    }
    s.labels = ms.labels;
    samples.push_back(std::move(s));
  }
  return assemble(manifest.schema, samples);
}

void save_bundle(const fs::path& dir, const ModelBundle& bundle) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());

  write_file(dir / "schema.json", dump_schema(bundle.schema));
  for (Index i = 0; i < static_cast<Index>(bundle.bases.size()); ++i)
    write_matrix(dir / basis_file(i), bundle.bases[i]);
  if (bundle.bank.attributes() > 0)
    write_matrix(dir / "selectors.marc", pack_selectors(bundle.bank));
  write_matrix(dir / "G.marc", bundle.G);
  write_matrix(dir / "E.marc", bundle.E);

  const auto& d = bundle.diagnostics;
  const json diag{{"iterations", d.iterations},
                  {"masked_residual", d.masked_residual},
                  {"constraint_residual", d.constraint_residual},
                  {"converged", d.converged},
                  {"residual_history", d.residual_history},
                  {"mu_history", d.mu_history}};
  write_file(dir / "diagnostics.json", diag.dump(2));
  write_file(dir / "config.json", config_to_json(bundle.config).dump(2));

  fs::remove(dir / "span.json", ec);
  fs::remove(dir / "K.marc", ec);
  if (bundle.span && bundle.span_rule) {
    write_file(dir / "span.json", rule_to_json(*bundle.span_rule).dump(2));
    if (bundle.span->cols() > 0) write_matrix(dir / "K.marc", *bundle.span);
  }
}

ModelBundle load_bundle(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw IoError("bundle directory '" + dir.string() + "' not found");
  ModelBundle b;
  b.schema = parse_schema(read_file(dir / "schema.json"));
  for (Index i = 0; i < b.schema.size(); ++i)
    b.bases.push_back(read_matrix(dir / basis_file(i)));
  if (b.schema.size() > 0)
    b.bank = unpack_selectors(read_matrix(dir / "selectors.marc"), b.schema);
  b.G = read_matrix(dir / "G.marc");
  b.E = read_matrix(dir / "E.marc");
  if (b.E.rows() != b.G.rows() || b.E.cols() != b.G.cols())
    throw InvalidArgument("bundle: G and E shapes differ");
  for (Index i = 0; i < b.schema.size(); ++i)
    if (b.bases[i].rows() != b.G.rows() ||
        b.bases[i].cols() != b.schema.instantiation_count(i))
      throw InvalidArgument("bundle: basis " + std::to_string(i) +
                            " shape does not match schema");

  const json diag = parse_json(read_file(dir / "diagnostics.json"), "diagnostics");
  with_json_errors("diagnostics", [&] {
    auto& d = b.diagnostics;
    d.iterations = diag.at("iterations").get<int>();
    d.masked_residual = diag.at("masked_residual").get<double>();
    d.constraint_residual = diag.at("constraint_residual").get<double>();
    d.converged = diag.at("converged").get<bool>();
    d.residual_history = diag.at("residual_history").get<std::vector<double>>();
    d.mu_history = diag.at("mu_history").get<std::vector<double>>();
    return 0;
  });
  const json config = parse_json(read_file(dir / "config.json"), "config");
  b.config = with_json_errors("config", [&] { return config_from_json(config); });

  if (fs::exists(dir / "span.json")) {
    const json rule = parse_json(read_file(dir / "span.json"), "span");
    b.span_rule = with_json_errors("span", [&] { return rule_from_json(rule); });
    if (fs::exists(dir / "K.marc"))
      b.span = read_matrix(dir / "K.marc");
    else
      b.span = Matrix(b.G.rows(), 0);
  }
  return b;
}

void save_truth(const fs::path& dir, const synth::GroundTruth& truth) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  const json meta{{"schema", schema_to_json(truth.schema)},
                  {"label_index", truth.label_index},
                  {"g_sigma", std::vector<double>(truth.g_sigma.data(),
                                                  truth.g_sigma.data() +
                                                      truth.g_sigma.size())}};
  write_file(dir / "truth.json", meta.dump(2));
  for (Index i = 0; i < static_cast<Index>(truth.bases.size()); ++i)
    write_matrix(dir / basis_file(i), truth.bases[i]);
  if (truth.bank.attributes() > 0)
    write_matrix(dir / "selectors.marc", pack_selectors(truth.bank));
  write_matrix(dir / "G.marc", truth.G);
  write_matrix(dir / "E.marc", truth.E);
  write_matrix(dir / "W.marc", truth.W);
  write_matrix(dir / "X.marc", truth.X);
  if (truth.g_sigma.size() > 0) {
    write_matrix(dir / "g_left.marc", truth.g_left);
    write_matrix(dir / "g_right.marc", truth.g_right);
  }
}

synth::GroundTruth load_truth(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw IoError("truth directory '" + dir.string() + "' not found");
  synth::GroundTruth t;
  const json meta = parse_json(read_file(dir / "truth.json"), "truth");
  std::vector<double> sigma;
  with_json_errors("truth", [&] {
    t.schema = schema_from_json(meta.at("schema"));
    t.label_index = meta.at("label_index").get<std::vector<std::vector<Index>>>();
    sigma = meta.at("g_sigma").get<std::vector<double>>();
    return 0;
  });
  for (Index i = 0; i < t.schema.size(); ++i)
    t.bases.push_back(read_matrix(dir / basis_file(i)));
  if (t.schema.size() > 0)
    t.bank = unpack_selectors(read_matrix(dir / "selectors.marc"), t.schema);
  t.G = read_matrix(dir / "G.marc");
  t.E = read_matrix(dir / "E.marc");
  t.W = read_matrix(dir / "W.marc");
  t.X = read_matrix(dir / "X.marc");
  t.g_sigma = Eigen::Map<const Vector>(sigma.data(),
                                       static_cast<Index>(sigma.size()));
  if (!sigma.empty()) {
    t.g_left = read_matrix(dir / "g_left.marc");
    t.g_right = read_matrix(dir / "g_right.marc");
  } else {
    t.g_left = Matrix(t.G.rows(), 0);
    t.g_right = Matrix(t.G.cols(), 0);
  }
  if (static_cast<Index>(t.label_index.size()) != t.schema.size())
    throw InvalidArgument("truth: label index does not match schema");
  for (const auto& labels : t.label_index)
    if (static_cast<Index>(labels.size()) != t.G.cols())
      throw InvalidArgument("truth: label index length does not match data");
  return t;
}

std::string metrics_json(const synth::MetricsReport& r) {
  const json j{{"clean_error_observed", r.clean_error_observed},
               {"clean_error_overall", r.clean_error_overall},
               {"sparse_precision", r.sparse_precision},
               {"sparse_recall", r.sparse_recall},
               {"sparse_f1", r.sparse_f1},
               {"subspace_angle_deg", r.subspace_angle_deg}};
  return j.dump(2);
}

}  // namespace marca::io
