#include "jointlab/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace jointlab::io {

namespace {

void pad(std::string& out, int indent) { out.append(static_cast<std::size_t>(indent), ' '); }

bool is_scalar(const Json& j) { return !j.is_array() && !j.is_object(); }

void dump_rec(const Json& j, std::string& out, int indent) {
  switch (j.type()) {
    case Json::value_t::null: out += "null"; return;
    case Json::value_t::boolean: out += j.get<bool>() ? "true" : "false"; return;
    case Json::value_t::number_integer: out += std::to_string(j.get<std::int64_t>()); return;
    case Json::value_t::number_unsigned: out += std::to_string(j.get<std::uint64_t>()); return;
    case Json::value_t::number_float: {
      const double v = j.get<double>();
      if (!std::isfinite(v)) {
        out += "null";
        return;
      }
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out += buf;
      return;
    }
    case Json::value_t::string: out += j.dump(); return;
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      if (std::all_of(j.begin(), j.end(), is_scalar)) {
        out += '[';
        bool first = true;
        for (const auto& e : j) {
          if (!first) out += ", ";
          first = false;
          dump_rec(e, out, indent);
        }
        out += ']';
        return;
      }
      out += "[\n";
      bool first = true;
      for (const auto& e : j) {
        if (!first) out += ",\n";
        first = false;
        pad(out, indent + 2);
        dump_rec(e, out, indent + 2);
      }
      out += '\n';
      pad(out, indent);
      out += ']';
      return;
    }
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      // nlohmann's default object type is a std::map, so iteration is key-sorted.
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        pad(out, indent + 2);
        out += Json(it.key()).dump();
        out += ": ";
        dump_rec(it.value(), out, indent + 2);
      }
      out += '\n';
      pad(out, indent);
      out += '}';
      return;
    }
    default: throw Error("canonical_dump: unsupported JSON value");
  }
}

}  // namespace

std::string canonical_dump(const Json& j) {
  std::string out;
  dump_rec(j, out, 0);
  out += '\n';
  return out;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < len; ++k) {
    out += hex[md[k] >> 4];
    out += hex[md[k] & 15];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Line index: a second, position-aware pass over text nlohmann already accepted.

namespace {

struct Scanner {
  const std::string& s;
  std::size_t i = 0;
  int line = 1;
  std::map<std::string, int>& lines;

  void ws() {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\n' || s[i] == '\r')) {
      if (s[i] == '\n') ++line;
      ++i;
    }
  }

  std::string string_token() {
    std::string out;
    ++i;  // opening quote
    while (i < s.size() && s[i] != '"') {
      if (s[i] == '\\' && i + 1 < s.size()) {
        ++i;
        out += s[i] == 'n' ? '\n' : s[i] == 't' ? '\t' : s[i];
      } else {
        out += s[i];
      }
      ++i;
    }
    ++i;  // closing quote
    return out;
  }

  static std::string escape(const std::string& key) {
    std::string out;
    for (char c : key) {
      if (c == '~') out += "~0";
      else if (c == '/') out += "~1";
      else out += c;
    }
    return out;
  }

  void value(const std::string& ptr) {
    ws();
    if (i >= s.size()) return;
    lines.emplace(ptr, line);
    const char c = s[i];
    if (c == '{') {
      ++i;
      for (;;) {
        ws();
        if (i >= s.size() || s[i] == '}') break;
        const std::string key = string_token();
        ws();
        ++i;  // ':'
        value(ptr + "/" + escape(key));
        ws();
        if (i < s.size() && s[i] == ',') ++i;
      }
      ++i;
    } else if (c == '[') {
      ++i;
      for (int k = 0;; ++k) {
        ws();
        if (i >= s.size() || s[i] == ']') break;
        value(ptr + "/" + std::to_string(k));
        ws();
        if (i < s.size() && s[i] == ',') ++i;
      }
      ++i;
    } else if (c == '"') {
      string_token();
    } else {
      while (i < s.size() && s[i] != ',' && s[i] != '}' && s[i] != ']' && s[i] != ' ' && s[i] != '\n' &&
             s[i] != '\r' && s[i] != '\t')
        ++i;
    }
  }
};

}  // namespace

LineIndex::LineIndex(const std::string& text) {
  Scanner sc{text, 0, 1, lines_};
  sc.value("");
}

int LineIndex::line_of(const std::string& pointer) const {
  std::string p = pointer;
  for (;;) {
    auto it = lines_.find(p);
    if (it != lines_.end()) return it->second;
    if (p.empty()) return 0;
    p = p.substr(0, p.rfind('/'));
  }
}

JsonDocument read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("", path + ": cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  JsonDocument doc;
  doc.path = path;
  doc.text = ss.str();
  try {
    doc.value = Json::parse(doc.text);
  } catch (const Json::parse_error& e) {
    throw InputError("", path + ": " + e.what());
  }
  return doc;
}

std::string anchored_message(const JsonDocument& doc, const InputError& e) {
  if (e.pointer().empty() && std::string(e.what()).rfind(doc.path, 0) == 0) return e.what();
  const int line = LineIndex(doc.text).line_of(e.pointer());
  std::string out = doc.path + ":" + std::to_string(std::max(line, 1)) + ": " + e.what();
  if (!e.pointer().empty()) out += " (at " + e.pointer() + ")";
  return out;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(path + ": cannot open for writing");
  out << text;
  if (!out) throw Error(path + ": write failed");
}

// ---------------------------------------------------------------------------
// Typed accessors that remember where they looked.

namespace {

const Json& field(const Json& j, const std::string& key, const std::string& where) {
  if (!j.is_object()) throw InputError(where, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw InputError(where, "missing key '" + key + "'");
  return *it;
}

double number(const Json& j, const std::string& where) {
  if (!j.is_number()) throw InputError(where, "expected a number");
  return j.get<double>();
}

int integer(const Json& j, const std::string& where) {
  if (!j.is_number_integer()) throw InputError(where, "expected an integer");
  return j.get<int>();
}

bool boolean(const Json& j, const std::string& where) {
  if (!j.is_boolean()) throw InputError(where, "expected true or false");
  return j.get<bool>();
}

std::string text(const Json& j, const std::string& where) {
  if (!j.is_string()) throw InputError(where, "expected a string");
  return j.get<std::string>();
}

const Json& array(const Json& j, const std::string& where) {
  if (!j.is_array()) throw InputError(where, "expected an array");
  return j;
}

VectorXd vector_of(const Json& j, const std::string& where, std::optional<int> len = std::nullopt) {
  array(j, where);
  if (len && static_cast<int>(j.size()) != *len)
    throw InputError(where, "expected " + std::to_string(*len) + " entries, got " + std::to_string(j.size()));
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k)
    v(static_cast<Eigen::Index>(k)) = number(j[k], where + "/" + std::to_string(k));
  return v;
}

std::vector<int> ints_of(const Json& j, const std::string& where) {
  array(j, where);
  std::vector<int> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(integer(j[k], where + "/" + std::to_string(k)));
  return out;
}

MatrixXd matrix_of(const Json& j, const std::string& where, int rows, int cols) {
  array(j, where);
  if (static_cast<int>(j.size()) != rows)
    throw InputError(where, "expected " + std::to_string(rows) + " rows, got " + std::to_string(j.size()));
  MatrixXd m(rows, cols);
  for (int a = 0; a < rows; ++a) m.row(a) = vector_of(j[static_cast<std::size_t>(a)], where + "/" + std::to_string(a), cols);
  return m;
}

Json vec_json(const VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v(k));
  return out;
}

Json mat_json(const MatrixXd& m) {
  Json out = Json::array();
  for (Eigen::Index a = 0; a < m.rows(); ++a) out.push_back(vec_json(m.row(a).transpose()));
  return out;
}

Json path_json(const CovariatePath& p) {
  Json out = Json::array();
  for (std::size_t k = 0; k < p.change_points().size(); ++k)
    out.push_back({{"t", p.change_points()[k]},
                   {"values", vec_json(p.values().row(static_cast<Eigen::Index>(k)).transpose())}});
  return out;
}

CovariatePath path_from_json(const Json& j, int dim, const std::string& where) {
  array(j, where);
  if (j.empty()) {
    if (dim != 0) throw InputError(where, "path is empty but its dimension is " + std::to_string(dim));
    return CovariatePath::empty();
  }
  std::vector<double> cps;
  MatrixXd vals(static_cast<Eigen::Index>(j.size()), dim);
  for (std::size_t k = 0; k < j.size(); ++k) {
    const std::string at = where + "/" + std::to_string(k);
    cps.push_back(number(field(j[k], "t", at), at + "/t"));
    vals.row(static_cast<Eigen::Index>(k)) = vector_of(field(j[k], "values", at), at + "/values", dim).transpose();
  }
  try {
    return CovariatePath(std::move(cps), std::move(vals));
  } catch (const Error& e) {
    throw InputError(where, e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------------------

Json to_json(const ModelSpec& spec) {
  return {{"p", spec.p}, {"d_a", spec.d_a}, {"r", spec.r}, {"s", spec.s}, {"tau", spec.tau}};
}

ModelSpec spec_from_json(const Json& j, const std::string& where) {
  ModelSpec spec;
  spec.p = integer(field(j, "p", where), where + "/p");
  spec.d_a = integer(field(j, "d_a", where), where + "/d_a");
  spec.r = integer(field(j, "r", where), where + "/r");
  spec.s = integer(field(j, "s", where), where + "/s");
  spec.tau = number(field(j, "tau", where), where + "/tau");
  if (spec.p < 0 || spec.r < 0 || spec.s < 0 || spec.d_a < 1)
    throw InputError(where, "dimensions must be non-negative and d_a >= 1");
  return spec;
}

Json to_json(const ThetaParams& theta) {
  return {{"sigma_y", theta.sigma_y},
          {"sigma_a", mat_json(theta.sigma_a)},
          {"beta", vec_json(theta.beta)},
          {"gamma", vec_json(theta.gamma)},
          {"phi", vec_json(theta.phi)}};
}

ThetaParams theta_from_json(const Json& j, const ModelSpec& spec, const std::string& where) {
  ThetaParams t;
  t.sigma_y = number(field(j, "sigma_y", where), where + "/sigma_y");
  t.sigma_a = matrix_of(field(j, "sigma_a", where), where + "/sigma_a", spec.d_a, spec.d_a);
  t.beta = vector_of(field(j, "beta", where), where + "/beta", spec.p);
  t.gamma = vector_of(field(j, "gamma", where), where + "/gamma", spec.r);
  t.phi = vector_of(field(j, "phi", where), where + "/phi", spec.s);
  try {
    t.validate(spec);
  } catch (const Error& e) {
    throw InputError(where, e.what());
  }
  return t;
}

Json to_json(const StepCumHazard& lam) {
  Json out = Json::array();
  for (std::size_t k = 0; k < lam.size(); ++k) out.push_back({{"t", lam.jump_times()[k]}, {"jump", lam.jump_sizes()[k]}});
  return out;
}

StepCumHazard hazard_from_json(const Json& j, const std::string& where) {
  array(j, where);
  std::vector<double> t, d;
  for (std::size_t k = 0; k < j.size(); ++k) {
    const std::string at = where + "/" + std::to_string(k);
    t.push_back(number(field(j[k], "t", at), at + "/t"));
    d.push_back(number(field(j[k], "jump", at), at + "/jump"));
  }
  try {
    return StepCumHazard(std::move(t), std::move(d));
  } catch (const Error& e) {
    throw InputError(where, e.what());
  }
}

Json to_json(const Dataset& data, const std::vector<SubjectTruth>* truth) {
  Json subjects = Json::array();
  for (const auto& s : data.subjects) {
    Json meas = Json::array();
    for (int k = 0; k < s.n_meas(); ++k)
      meas.push_back({{"t", s.meas_times[static_cast<std::size_t>(k)]}, {"y", s.y(k)}});
    subjects.push_back({{"id", s.id},
                        {"meas", meas},
                        {"paths",
                         {{"x", path_json(s.x_path)},
                          {"xt", path_json(s.xt_path)},
                          {"w", path_json(s.w_path)},
                          {"wt", path_json(s.wt_path)}}},
                        {"z", s.z},
                        {"delta", s.delta}});
  }
  Json out = {{"spec", to_json(data.spec)}, {"subjects", subjects}};
  if (truth) {
    Json tj = Json::array();
    for (std::size_t i = 0; i < truth->size(); ++i) {
      const auto& t = (*truth)[i];
      tj.push_back({{"id", data.subjects[i].id}, {"a", vec_json(t.a)}, {"t", std::isfinite(t.t) ? Json(t.t) : Json(nullptr)}, {"c", t.c}});
    }
    out["truth"] = tj;
  }
  return out;
}

Dataset dataset_from_json(const Json& j) {
  Dataset data;
  data.spec = spec_from_json(field(j, "spec", ""), "/spec");
  const Json& subs = array(field(j, "subjects", ""), "/subjects");
  for (std::size_t i = 0; i < subs.size(); ++i) {
    const std::string at = "/subjects/" + std::to_string(i);
    const Json& sj = subs[i];
    SubjectRecord s;
    const Json& id = field(sj, "id", at);
    s.id = id.is_number_integer() ? std::to_string(id.get<long long>()) : text(id, at + "/id");
    const Json& meas = array(field(sj, "meas", at), at + "/meas");
    s.y.resize(static_cast<Eigen::Index>(meas.size()));
    for (std::size_t k = 0; k < meas.size(); ++k) {
      const std::string mk = at + "/meas/" + std::to_string(k);
      s.meas_times.push_back(number(field(meas[k], "t", mk), mk + "/t"));
      s.y(static_cast<Eigen::Index>(k)) = number(field(meas[k], "y", mk), mk + "/y");
    }
    const Json& paths = field(sj, "paths", at);
    const std::string pat = at + "/paths";
    auto block = [&](const char* name, int dim) {
      if (!paths.is_object()) throw InputError(pat, "expected an object");
      auto it = paths.find(name);
      if (it == paths.end()) {
        if (dim != 0) throw InputError(pat, std::string("missing key '") + name + "'");
        return CovariatePath::empty();
      }
      return path_from_json(*it, dim, pat + "/" + name);
    };
    s.x_path = block("x", data.spec.p);
    s.xt_path = block("xt", data.spec.d_a);
    s.w_path = block("w", data.spec.r);
    s.wt_path = block("wt", data.spec.s);
    s.z = number(field(sj, "z", at), at + "/z");
    s.delta = integer(field(sj, "delta", at), at + "/delta");
    data.subjects.push_back(std::move(s));
  }
  return data;
}

std::string dataset_digest(const Dataset& data) { return sha256_hex(canonical_dump(to_json(data))); }

// ---------------------------------------------------------------------------

Json to_json(const SimScenario& sc) {
  Json cols = Json::array();
  for (const auto& c : sc.covariates.columns) {
    Json cj = {{"kind", to_string(c.kind)}};
    switch (c.kind) {
      case CovariateColumn::Kind::constant: cj["value"] = c.a; break;
      case CovariateColumn::Kind::bernoulli: cj["p"] = c.a; break;
      case CovariateColumn::Kind::normal:
        cj["mean"] = c.a;
        cj["sd"] = c.b;
        break;
      case CovariateColumn::Kind::uniform:
        cj["low"] = c.a;
        cj["high"] = c.b;
        break;
      case CovariateColumn::Kind::time: break;
    }
    cols.push_back(cj);
  }
  Json baseline = sc.baseline.kind == Baseline::Kind::constant
                      ? Json{{"kind", "constant"}, {"rate", sc.baseline.rate}}
                      : Json{{"kind", "weibull"}, {"shape", sc.baseline.shape}, {"scale", sc.baseline.scale}};
  Json censor = sc.censor_max ? Json{{"kind", "uniform"}, {"max", *sc.censor_max}} : Json{{"kind", "none"}};
  Json sched = Json::array();
  for (double t : sc.schedule) sched.push_back(t);
  return {{"spec", to_json(sc.spec)},
          {"theta_0", to_json(sc.theta_0)},
          {"baseline", baseline},
          {"covariates",
           {{"columns", cols},
            {"x", sc.covariates.x},
            {"xt", sc.covariates.xt},
            {"w", sc.covariates.w},
            {"wt", sc.covariates.wt}}},
          {"schedule", sched},
          {"censor", censor},
          {"seed", sc.seed}};
}

SimScenario scenario_from_json(const Json& j) {
  SimScenario sc;
  sc.spec = spec_from_json(field(j, "spec", ""), "/spec");
  if (!(sc.spec.tau > 0.0))
    throw InputError("/spec/tau", "tau must be positive (follow-up is administratively censored at tau)");
  if (sc.spec.s != sc.spec.d_a) throw InputError("/spec/s", "s (length of phi) must equal d_a");
  sc.theta_0 = theta_from_json(field(j, "theta_0", ""), sc.spec, "/theta_0");

  const Json& b = field(j, "baseline", "");
  const std::string kind = text(field(b, "kind", "/baseline"), "/baseline/kind");
  if (kind == "constant") {
    sc.baseline = Baseline::constant(number(field(b, "rate", "/baseline"), "/baseline/rate"));
  } else if (kind == "weibull") {
    sc.baseline = Baseline::weibull(number(field(b, "shape", "/baseline"), "/baseline/shape"),
                                    number(field(b, "scale", "/baseline"), "/baseline/scale"));
  } else {
    throw InputError("/baseline/kind", "unknown baseline kind '" + kind + "'");
  }
  try {
    sc.baseline.validate();
  } catch (const Error& e) {
    throw InputError("/baseline", e.what());
  }

  const Json& cv = field(j, "covariates", "");
  const Json& cols = array(field(cv, "columns", "/covariates"), "/covariates/columns");
  for (std::size_t k = 0; k < cols.size(); ++k) {
    const std::string at = "/covariates/columns/" + std::to_string(k);
    CovariateColumn c;
    try {
      c.kind = covariate_kind_from_string(text(field(cols[k], "kind", at), at + "/kind"));
    } catch (const InputError&) {
      throw;
    } catch (const Error& e) {
      throw InputError(at + "/kind", e.what());
    }
    switch (c.kind) {
      case CovariateColumn::Kind::constant: c.a = number(field(cols[k], "value", at), at + "/value"); break;
      case CovariateColumn::Kind::bernoulli: c.a = number(field(cols[k], "p", at), at + "/p"); break;
      case CovariateColumn::Kind::normal:
        c.a = number(field(cols[k], "mean", at), at + "/mean");
        c.b = number(field(cols[k], "sd", at), at + "/sd");
        break;
      case CovariateColumn::Kind::uniform:
        c.a = number(field(cols[k], "low", at), at + "/low");
        c.b = number(field(cols[k], "high", at), at + "/high");
        break;
      case CovariateColumn::Kind::time: break;
    }
    sc.covariates.columns.push_back(c);
  }
  sc.covariates.x = ints_of(field(cv, "x", "/covariates"), "/covariates/x");
  sc.covariates.xt = ints_of(field(cv, "xt", "/covariates"), "/covariates/xt");
  sc.covariates.w = ints_of(field(cv, "w", "/covariates"), "/covariates/w");
  sc.covariates.wt = ints_of(field(cv, "wt", "/covariates"), "/covariates/wt");

  const VectorXd sched = vector_of(field(j, "schedule", ""), "/schedule");
  sc.schedule.assign(sched.data(), sched.data() + sched.size());

  const Json& c = field(j, "censor", "");
  const std::string ck = text(field(c, "kind", "/censor"), "/censor/kind");
  if (ck == "uniform") sc.censor_max = number(field(c, "max", "/censor"), "/censor/max");
  else if (ck != "none") throw InputError("/censor/kind", "unknown censoring kind '" + ck + "'");

  if (j.contains("seed")) {
    const Json& s = j["seed"];
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
      throw InputError("/seed", "seed must be a non-negative integer");
    sc.seed = s.get<std::uint64_t>();
  }
  try {
    sc.validate();
  } catch (const Error& e) {
    std::string msg = e.what();
    std::string ptr;
    if (msg.find("schedule") != std::string::npos) ptr = "/schedule";
    else if (msg.find("covariate") != std::string::npos || msg.find("bernoulli") != std::string::npos ||
             msg.find("normal") != std::string::npos || msg.find("uniform") != std::string::npos)
      ptr = "/covariates";
    else if (msg.find("censor") != std::string::npos) ptr = "/censor";
    throw InputError(ptr, msg);
  }
  return sc;
}

// ---------------------------------------------------------------------------

Json to_json(const FitConfig& c) {
  return {{"quad_points", c.quad_points},
          {"adaptive", c.adaptive},
          {"max_iters", c.max_iters},
          {"tol_loglik", c.tol_loglik},
          {"tol_params", c.tol_params},
          {"newton_max", c.newton_max},
          {"newton_tol", c.newton_tol},
          {"fix_phi_zero", c.fix_phi_zero},
          {"hazard_tol", c.hazard_tol},
          {"hazard_max_sweeps", c.hazard_max_sweeps},
          {"sigma_y_floor", c.sigma_y_floor},
          {"sigma_a_eig_floor", c.sigma_a_eig_floor},
          {"theta_norm_warning", c.theta_norm_warning}};
}

FitConfig fit_config_from_json(const Json& j, FitConfig c) {
  if (!j.is_object()) throw InputError("", "fit config must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const std::string at = "/" + k;
    const Json& v = it.value();
    if (k == "quad_points") c.quad_points = integer(v, at);
    else if (k == "adaptive") c.adaptive = boolean(v, at);
    else if (k == "max_iters") c.max_iters = integer(v, at);
    else if (k == "tol_loglik") c.tol_loglik = number(v, at);
    else if (k == "tol_params") c.tol_params = number(v, at);
    else if (k == "newton_max") c.newton_max = integer(v, at);
    else if (k == "newton_tol") c.newton_tol = number(v, at);
    else if (k == "fix_phi_zero") c.fix_phi_zero = boolean(v, at);
    else if (k == "hazard_tol") c.hazard_tol = number(v, at);
    else if (k == "hazard_max_sweeps") c.hazard_max_sweeps = integer(v, at);
    else if (k == "sigma_y_floor") c.sigma_y_floor = number(v, at);
    else if (k == "sigma_a_eig_floor") c.sigma_a_eig_floor = number(v, at);
    else if (k == "theta_norm_warning") c.theta_norm_warning = number(v, at);
    else throw InputError(at, "unknown fit config key '" + k + "'");
  }
  try {
    c.validate();
  } catch (const Error& e) {
    throw InputError("", e.what());
  }
  return c;
}

Json to_json(const FitResult& fit, const ModelSpec& spec) {
  Json trace = Json::array();
  for (double v : fit.loglik_trace) trace.push_back(v);
  const auto& d = fit.diagnostics;
  Json diag = {{"newton_fallbacks", d.newton_fallbacks},
               {"sigma_y_floor_hit", d.sigma_y_floor_hit},
               {"sigma_a_floor_hit", d.sigma_a_floor_hit},
               {"max_loglik_decrease", d.max_loglik_decrease},
               {"self_consistency", d.self_consistency},
               {"polish_sweeps", d.polish_sweeps},
               {"warnings", d.warnings}};
  return {{"converged", fit.converged},
          {"iters", fit.iters},
          {"loglik", fit.loglik},
          {"loglik_trace", trace},
          {"theta_hat", to_json(fit.theta_hat)},
          {"theta_labels", theta_labels(spec)},
          {"theta_vector", vec_json(fit.theta_hat.to_vector())},
          {"lambda_hat", to_json(fit.lambda_hat)},
          {"diagnostics", diag}};
}

FitFile fit_from_json(const Json& j, const ModelSpec& spec) {
  FitFile f;
  f.theta_hat = theta_from_json(field(j, "theta_hat", ""), spec, "/theta_hat");
  f.lambda_hat = hazard_from_json(field(j, "lambda_hat", ""), "/lambda_hat");
  f.converged = boolean(field(j, "converged", ""), "/converged");
  if (j.contains("config")) {
    try {
      f.config = fit_config_from_json(j["config"]);
    } catch (const InputError& e) {
      throw InputError("/config" + e.pointer(), e.what());
    }
  }
  if (j.contains("manifest") && j["manifest"].contains("dataset_digest"))
    f.dataset_digest = text(j["manifest"]["dataset_digest"], "/manifest/dataset_digest");
  return f;
}

Json to_json(const InfoEstimate& est, const ModelSpec& spec) {
  const auto labels = theta_labels(spec);
  Json coords = Json::array();
  for (int c : est.coords) coords.push_back(labels[static_cast<std::size_t>(c)]);
  return {{"scheme", to_string(est.scheme)},
          {"c_h", est.c_h},
          {"h_n", est.h_used},
          {"coords", coords},
          {"raw", mat_json(est.raw)},
          {"matrix", mat_json(est.matrix)},
          {"asymmetry", est.asymmetry},
          {"se", est.se.size() ? vec_json(est.se) : Json(nullptr)},
          {"reliable", est.reliable},
          {"notes", est.notes},
          {"evaluations", est.evaluations}};
}

Json to_json(const WaldInterval& w) {
  return {{"label", w.label}, {"estimate", w.estimate}, {"se", w.se}, {"lower", w.lower}, {"upper", w.upper}};
}

namespace {

Json quantiles_json(const Quantiles& q) {
  return {{"mean", q.mean}, {"variance", q.variance}, {"median", q.median},
          {"q90", q.q90},   {"q95", q.q95},           {"max", q.max}};
}

}  // namespace

Json to_json(const StudySummary& s) {
  Json coords = Json::array();
  for (const auto& c : s.coords) {
    Json schemes = Json::array();
    for (const auto& st : c.schemes)
      schemes.push_back({{"scheme", st.scheme}, {"mean_se", st.mean_se}, {"coverage", st.coverage}, {"used", st.used}});
    coords.push_back({{"label", c.label},
                      {"truth", c.truth},
                      {"mean", c.mean},
                      {"bias", c.bias},
                      {"rmse", c.rmse},
                      {"emp_se", c.emp_se},
                      {"schemes", schemes}});
  }
  Json reps = Json::array();
  for (const auto& r : s.records) {
    Json ses = Json::array();
    for (const auto& se : r.se) ses.push_back(se.size() ? vec_json(se) : Json(nullptr));
    Json rj = {{"seed", r.seed},
               {"converged", r.converged},
               {"iters", r.iters},
               {"theta_hat", vec_json(r.theta_hat)},
               {"sup_lambda", r.sup_lambda},
               {"max_loglik_decrease", r.max_loglik_decrease},
               {"self_consistency", r.self_consistency},
               {"se", ses}};
    if (!r.error.empty()) rj["error"] = r.error;
    if (s.kind == StudyKind::lr) rj["lr"] = r.lr;
    reps.push_back(rj);
  }
  Json out = {{"study", to_string(s.kind)},
              {"n", s.n},
              {"replicates", s.replicates},
              {"converged", s.converged},
              {"non_converged", s.non_converged},
              {"valid", s.valid},
              {"schemes", s.schemes},
              {"unreliable", s.unreliable},
              {"coordinates", coords},
              {"sup_lambda", quantiles_json(s.sup_lambda)},
              {"records", reps}};
  if (s.kind == StudyKind::lr) {
    Json lr = quantiles_json(s.lr);
    lr["df"] = s.lr_df;
    out["lr"] = lr;
  }
  return out;
}

Json to_json(const CheckResult& c) {
  return {{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"detail", c.detail}};
}

Json to_json(const RunManifest& m) {
  Json out = {{"command", m.command},
              {"config_digest", m.config_digest},
              {"dataset_digest", m.dataset_digest},
              {"tool_version", m.tool_version}};
  out["seed"] = m.seed ? Json(*m.seed) : Json(nullptr);
  if (m.wall_time) out["wall_time_seconds"] = *m.wall_time;
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

struct CsvRow {
  int line = 0;
  std::vector<std::string> cells;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

std::vector<CsvRow> read_csv(const std::string& path, const std::vector<std::string>& header) {
  std::ifstream in(path);
  if (!in) throw InputError("", path + ": cannot open file");
  std::string line;
  int no = 0;
  std::vector<CsvRow> rows;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++no;
    if (trim(line).empty()) continue;
    auto cells = split(line, ',');
    for (auto& c : cells) c = trim(c);
    if (!seen_header) {
      if (cells != header) {
        std::string want;
        for (const auto& h : header) want += (want.empty() ? "" : ",") + h;
        throw InputError("", path + ":" + std::to_string(no) + ": expected header '" + want + "'");
      }
      seen_header = true;
      continue;
    }
    if (cells.size() != header.size())
      throw InputError("", path + ":" + std::to_string(no) + ": expected " + std::to_string(header.size()) +
                               " fields, got " + std::to_string(cells.size()));
    rows.push_back({no, std::move(cells)});
  }
  if (!seen_header) throw InputError("", path + ": empty file");
  return rows;
}

double parse_double(const std::string& s, const std::string& path, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw InputError("", path + ":" + std::to_string(line) + ": '" + s + "' is not a number");
}

}  // namespace

Dataset import_csv(const std::string& measurements, const std::string& paths, const std::string& events, double tau) {
  const auto ev = read_csv(events, {"id", "z", "delta"});
  const auto ms = read_csv(measurements, {"id", "t", "y"});
  const auto ps = read_csv(paths, {"id", "block", "t", "values"});

  Dataset data;
  data.spec.tau = tau;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& r : ev) {
    if (index.count(r.cells[0]))
      throw InputError("", events + ":" + std::to_string(r.line) + ": duplicate id '" + r.cells[0] + "'");
    index[r.cells[0]] = data.subjects.size();
    SubjectRecord s;
    s.id = r.cells[0];
    s.z = parse_double(r.cells[1], events, r.line);
    const std::string& d = r.cells[2];
    if (d != "0" && d != "1") throw InputError("", events + ":" + std::to_string(r.line) + ": delta must be 0 or 1");
    s.delta = d == "1" ? 1 : 0;
    data.subjects.push_back(std::move(s));
  }
  auto subject_of = [&](const CsvRow& r, const std::string& file) -> std::size_t {
    auto it = index.find(r.cells[0]);
    if (it == index.end())
      throw InputError("", file + ":" + std::to_string(r.line) + ": id '" + r.cells[0] + "' has no events row");
    return it->second;
  };

  std::vector<std::vector<std::pair<double, double>>> meas(data.subjects.size());
  for (const auto& r : ms)
    meas[subject_of(r, measurements)].emplace_back(parse_double(r.cells[1], measurements, r.line),
                                                   parse_double(r.cells[2], measurements, r.line));
  for (std::size_t i = 0; i < meas.size(); ++i) {
    auto& m = meas[i];
    std::stable_sort(m.begin(), m.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    auto& s = data.subjects[i];
    s.y.resize(static_cast<Eigen::Index>(m.size()));
    for (std::size_t k = 0; k < m.size(); ++k) {
      s.meas_times.push_back(m[k].first);
      s.y(static_cast<Eigen::Index>(k)) = m[k].second;
    }
  }

  const std::vector<std::string> blocks{"x", "xt", "w", "wt"};
  std::map<std::string, int> dims;
  using Rows = std::vector<std::pair<double, std::vector<double>>>;
  std::vector<std::map<std::string, Rows>> rows(data.subjects.size());
  for (const auto& r : ps) {
    const std::string& b = r.cells[1];
    if (std::find(blocks.begin(), blocks.end(), b) == blocks.end())
      throw InputError("", paths + ":" + std::to_string(r.line) + ": block must be one of x, xt, w, wt");
    std::vector<double> vals;
    if (!r.cells[3].empty())
      for (const auto& v : split(r.cells[3], ';')) vals.push_back(parse_double(trim(v), paths, r.line));
    auto [it, fresh] = dims.emplace(b, static_cast<int>(vals.size()));
    if (!fresh && it->second != static_cast<int>(vals.size()))
      throw InputError("", paths + ":" + std::to_string(r.line) + ": block " + b + " has dimension " +
                               std::to_string(it->second) + " elsewhere");
    rows[subject_of(r, paths)][b].emplace_back(parse_double(r.cells[2], paths, r.line), std::move(vals));
  }
  data.spec.p = dims.count("x") ? dims["x"] : 0;
  data.spec.d_a = dims.count("xt") ? dims["xt"] : 0;
  data.spec.r = dims.count("w") ? dims["w"] : 0;
  data.spec.s = dims.count("wt") ? dims["wt"] : 0;
  if (data.spec.d_a < 1) throw InputError("", paths + ": block xt is required (random-effect design)");

  for (std::size_t i = 0; i < data.subjects.size(); ++i) {
    auto& s = data.subjects[i];
    for (const auto& b : blocks) {
      const int dim = dims.count(b) ? dims[b] : 0;
      auto it = rows[i].find(b);
      CovariatePath path;
      if (it == rows[i].end()) {
        if (dim != 0) throw InputError("", paths + ": subject '" + s.id + "' has no rows for block " + b);
        path = CovariatePath::empty();
      } else {
        auto& rs = it->second;
        std::stable_sort(rs.begin(), rs.end(), [](const auto& a, const auto& c) { return a.first < c.first; });
        std::vector<double> cps;
        MatrixXd vals(static_cast<Eigen::Index>(rs.size()), dim);
        for (std::size_t k = 0; k < rs.size(); ++k) {
          cps.push_back(rs[k].first);
          for (int c = 0; c < dim; ++c) vals(static_cast<Eigen::Index>(k), c) = rs[k].second[static_cast<std::size_t>(c)];
        }
        try {
          path = CovariatePath(std::move(cps), std::move(vals));
        } catch (const Error& e) {
          throw InputError("", paths + ": subject '" + s.id + "' block " + b + ": " + e.what());
        }
      }
      if (b == "x") s.x_path = path;
      else if (b == "xt") s.xt_path = path;
      else if (b == "w") s.w_path = path;
      else s.wt_path = path;
    }
  }
  return data;
}

}  // namespace jointlab::io
