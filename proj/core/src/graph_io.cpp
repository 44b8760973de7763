#include "sbanm/graph_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>

#include <nlohmann/json.hpp>

#include "sbanm/error.hpp"

namespace sbanm {
namespace {

constexpr double kAgreementClamp = 1e-7;
constexpr double kStrengthClamp = 1e-12;

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::string at_line(std::size_t line_no) { return " (line " + std::to_string(line_no) + ")"; }

bool parse_size(const std::string& text, std::size_t& out) {
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && !text.empty();
}

bool parse_real(const std::string& text, double& out) {
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && !text.empty();
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot rename " + tmp.string() + " to " + path.string());
}

// ---------------------------------------------------------------------------
// Survey responses

ResponseMatrix parse_responses(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("response file is empty");
  strip_cr(line);
  const auto header = split(line, ',');
  if (header.empty() || trim(header[0]) != "subject") {
    throw DataError("response header must start with 'subject'" + at_line(1));
  }

  ResponseMatrix rm;
  std::map<std::string, std::size_t> layer_of;
  std::vector<std::pair<std::size_t, std::size_t>> column_slot;  // (layer, item)
  for (std::size_t c = 1; c < header.size(); ++c) {
    const std::string col = trim(header[c]);
    const auto colon = col.find(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == col.size()) {
      throw DataError("column '" + col + "' is not <layer>:<item>" + at_line(1));
    }
    const std::string layer = col.substr(0, colon);
    auto it = layer_of.find(layer);
    if (it == layer_of.end()) {
      it = layer_of.emplace(layer, rm.layers.size()).first;
      rm.layers.push_back(ResponseLayer{layer, {}, {}});
    }
    auto& L = rm.layers[it->second];
    column_slot.emplace_back(it->second, L.items.size());
    L.items.push_back(col.substr(colon + 1));
  }
  if (rm.layers.empty()) throw DataError("layer has no items");

  std::vector<std::vector<Response>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size()) {
      throw DataError("expected " + std::to_string(header.size()) + " fields" + at_line(line_no));
    }
    rm.subjects.push_back(trim(cells[0]));
    std::vector<Response> row(cells.size() - 1);
    for (std::size_t c = 1; c < cells.size(); ++c) {
      const std::string v = trim(cells[c]);
      if (v == "1") {
        row[c - 1] = Response::kYes;
      } else if (v == "0") {
        row[c - 1] = Response::kNo;
      } else if (v == "NA") {
        row[c - 1] = Response::kMissing;
      } else {
        throw DataError("response '" + v + "' not in {1,0,NA}" + at_line(line_no));
      }
    }
    rows.push_back(std::move(row));
  }

  const std::size_t n = rows.size();
  for (auto& L : rm.layers) L.cells.assign(n * L.items.size(), Response::kMissing);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t c = 0; c < column_slot.size(); ++c) {
      auto [layer, item] = column_slot[c];
      auto& L = rm.layers[layer];
      L.cells[s * L.items.size() + item] = rows[s][c];
    }
  }
  return rm;
}

ResponseMatrix read_responses(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_responses(in);
}

MultilayerNetwork build_similarity_network(const ResponseMatrix& responses) {
  const std::size_t n = responses.num_subjects();
  if (n < 2) throw DataError("need at least 2 subjects");
  if (responses.layers.empty()) throw DataError("layer has no items");
  for (const auto& L : responses.layers) {
    if (L.num_items() == 0) throw DataError("layer has no items");
  }
  const std::size_t K = responses.layers.size();
  MultilayerNetwork net(n, K);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& L = responses.layers[k];
    const std::size_t U = L.num_items();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        long agreement = 0;
        for (std::size_t u = 0; u < U; ++u) {
          const Response a = L.at(i, u);
          const Response b = L.at(j, u);
          if (a == Response::kYes && b == Response::kYes) ++agreement;
          if (a == Response::kNo && b == Response::kNo) --agreement;
        }
        double r = static_cast<double>(agreement) / static_cast<double>(U);
        r = std::clamp(r, -1.0 + kAgreementClamp, 1.0 - kAgreementClamp);
        net.set_weight(i, j, k, std::atanh(r));
      }
    }
  }
  net.set_labels(responses.subjects);
  return net;
}

double fisher(double r) {
  if (!(std::abs(r) < 1.0)) throw DataError("fisher: |r| must be < 1");
  return std::atanh(r);
}

double fisher_inverse(double z) { return std::tanh(z); }

MultilayerNetwork normalize_logit(const MultilayerNetwork& net) {
  const std::size_t K = net.num_layers();
  const std::size_t P = net.num_pairs();
  std::vector<double> strength(K, 0.0);
  for (std::size_t p = 0; p < P; ++p) {
    const auto w = net.pair(p);
    for (std::size_t k = 0; k < K; ++k) {
      if (w[k] < 0.0) throw DataError("logit normalisation needs nonnegative counts");
      strength[k] += w[k];
    }
  }
  for (double s : strength) {
    if (!(s > 0.0)) throw DataError("layer has no trips");
  }
  MultilayerNetwork out(net.num_nodes(), K);
  const std::size_t n = net.num_nodes();
  std::vector<double> row(K);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto w = net.edge(i, j);
      for (std::size_t k = 0; k < K; ++k) {
        const double share = std::clamp(w[k] / strength[k], kStrengthClamp, 1.0 - kStrengthClamp);
        row[k] = logit(share);
      }
      out.set_edge(i, j, row);
    }
  }
  out.set_labels(net.labels());
  return out;
}

MultilayerNetwork sum_layers(const MultilayerNetwork& net) {
  MultilayerNetwork out(net.num_nodes(), 1);
  const std::size_t n = net.num_nodes();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (double w : net.edge(i, j)) s += w;
      out.set_weight(i, j, 0, s);
    }
  }
  out.set_labels(net.labels());
  return out;
}

// ---------------------------------------------------------------------------
// Network file

MultilayerNetwork parse_network(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("malformed header: empty file (line 1)");
  strip_cr(line);
  std::size_t n = 0;
  std::size_t K = 0;
  {
    const auto parts = split(line, ' ');
    if (parts.size() != 4 || parts[0] != "#sbanm-net" || parts[1] != "v1" ||
        parts[2].rfind("n=", 0) != 0 || parts[3].rfind("K=", 0) != 0 ||
        !parse_size(parts[2].substr(2), n) || !parse_size(parts[3].substr(2), K)) {
      throw DataError("malformed header '" + line + "'" + at_line(1));
    }
    if (n < 2 || K < 1) throw DataError("malformed header: need n >= 2 and K >= 1" + at_line(1));
  }

  MultilayerNetwork net(n, K);
  std::size_t next_i = 0;
  std::size_t next_j = 1;
  std::size_t seen = 0;
  std::size_t line_no = 1;
  std::vector<double> w(K);
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != K + 2) {
      throw DataError("expected " + std::to_string(K + 2) + " tab-separated fields" + at_line(line_no));
    }
    std::size_t i = 0;
    std::size_t j = 0;
    if (!parse_size(fields[0], i) || !parse_size(fields[1], j)) {
      throw DataError("malformed node index" + at_line(line_no));
    }
    if (i >= j || j >= n) throw DataError("invalid pair (" + fields[0] + "," + fields[1] + ")" + at_line(line_no));
    if (seen == net.num_pairs()) throw DataError("more pairs than n(n-1)/2" + at_line(line_no));
    if (i != next_i || j != next_j) {
      if (std::pair(i, j) > std::pair(next_i, next_j)) {
        throw DataError("incomplete dense pair list: missing pair (" + std::to_string(next_i) + "," +
                        std::to_string(next_j) + ")" + at_line(line_no));
      }
      throw DataError("pair (" + fields[0] + "," + fields[1] + ") out of order" + at_line(line_no));
    }
    for (std::size_t k = 0; k < K; ++k) {
      if (!parse_real(fields[k + 2], w[k])) throw DataError("malformed weight '" + fields[k + 2] + "'" + at_line(line_no));
      if (!std::isfinite(w[k])) throw DataError("non-finite weight" + at_line(line_no));
    }
    net.set_edge(i, j, w);
    ++seen;
    if (++next_j == n) {
      ++next_i;
      next_j = next_i + 1;
    }
  }
  if (seen != net.num_pairs()) {
    throw DataError("incomplete dense pair list: missing pair (" + std::to_string(next_i) + "," +
                    std::to_string(next_j) + ")" + at_line(line_no + 1));
  }
  return net;
}

MultilayerNetwork read_network(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_network(in);
}

std::string format_network(const MultilayerNetwork& net) {
  std::string out = "#sbanm-net v1 n=" + std::to_string(net.num_nodes()) +
                    " K=" + std::to_string(net.num_layers()) + "\n";
  const std::size_t n = net.num_nodes();
  out.reserve(out.size() + net.num_pairs() * (12 + 25 * net.num_layers()));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      out += std::to_string(i);
      out += '\t';
      out += std::to_string(j);
      for (double w : net.edge(i, j)) {
        out += '\t';
        out += format_double(w);
      }
      out += '\n';
    }
  }
  return out;
}

void write_network(const MultilayerNetwork& net, const std::filesystem::path& path) {
  write_file_atomic(path, format_network(net));
}

// ---------------------------------------------------------------------------
// Memberships

std::string format_memberships(const std::vector<std::size_t>& blocks, const Eigen::MatrixXd& tau) {
  if (static_cast<Eigen::Index>(blocks.size()) != tau.rows()) {
    throw DataError("membership and tau row counts differ");
  }
  std::string out = "node,block";
  for (Eigen::Index q = 0; q < tau.cols(); ++q) out += ",tau_" + std::to_string(q);
  out += '\n';
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    out += std::to_string(i) + "," + std::to_string(blocks[i]);
    for (Eigen::Index q = 0; q < tau.cols(); ++q) {
      out += ',';
      out += format_double(tau(static_cast<Eigen::Index>(i), q));
    }
    out += '\n';
  }
  return out;
}

void write_memberships(const std::filesystem::path& path, const std::vector<std::size_t>& blocks,
                       const Eigen::MatrixXd& tau) {
  write_file_atomic(path, format_memberships(blocks, tau));
}

std::vector<std::size_t> parse_memberships(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("membership file is empty");
  strip_cr(line);
  const auto header = split(line, ',');
  if (header.size() < 2 || header[0] != "node" || header[1] != "block") {
    throw DataError("membership header must start with 'node,block'" + at_line(1));
  }
  std::vector<std::size_t> blocks;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    std::size_t node = 0;
    std::size_t block = 0;
    if (fields.size() != header.size() || !parse_size(fields[0], node) || !parse_size(fields[1], block)) {
      throw DataError("malformed membership row" + at_line(line_no));
    }
    if (node != blocks.size()) throw DataError("membership rows must list nodes 0..n-1 in order" + at_line(line_no));
    blocks.push_back(block);
  }
  if (blocks.empty()) throw DataError("membership file has no rows");
  return blocks;
}

std::vector<std::size_t> read_memberships(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_memberships(in);
}

// ---------------------------------------------------------------------------
// Parameter document

std::string format_params(const ParamsDocument& doc) {
  const ModelParams& p = doc.params;
  nlohmann::ordered_json j;
  j["Q"] = p.Q;
  j["K"] = p.num_layers();
  j["alpha"] = p.alpha;
  j["psi"] = p.psi;
  j["noise_block"] = p.noise_block;
  auto blocks = nlohmann::ordered_json::array();
  for (const auto& b : p.blocks) {
    nlohmann::ordered_json jb;
    jb["mu"] = b.mu;
    jb["var"] = b.var;
    jb["rho"] = b.rho;
    blocks.push_back(std::move(jb));
  }
  j["blocks"] = std::move(blocks);
  j["noise"] = {{"mu", p.noise.mu}, {"var", p.noise.var}};
  j["elbo"] = doc.elbo ? nlohmann::ordered_json(*doc.elbo) : nlohmann::ordered_json(nullptr);
  j["icl"] = doc.icl ? nlohmann::ordered_json(*doc.icl) : nlohmann::ordered_json(nullptr);
  j["seed"] = doc.seed;
  return j.dump(2) + "\n";
}

ParamsDocument parse_params(const std::string& text) {
  ParamsDocument doc;
  try {
    const auto j = nlohmann::json::parse(text);
    ModelParams& p = doc.params;
    p.Q = j.at("Q").get<std::size_t>();
    const auto K = j.at("K").get<std::size_t>();
    p.alpha = j.at("alpha").get<std::vector<double>>();
    p.psi = j.at("psi").get<double>();
    p.noise_block = j.at("noise_block").get<std::size_t>();
    for (const auto& jb : j.at("blocks")) {
      p.blocks.push_back(BlockParams{jb.at("mu").get<std::vector<double>>(),
                                     jb.at("var").get<std::vector<double>>(), jb.at("rho").get<double>()});
    }
    p.noise.mu = j.at("noise").at("mu").get<std::vector<double>>();
    p.noise.var = j.at("noise").at("var").get<std::vector<double>>();
    if (p.noise.mu.size() != K) throw DataError("parameter file: K does not match noise mean length");
    if (j.contains("elbo") && !j["elbo"].is_null()) doc.elbo = j["elbo"].get<double>();
    if (j.contains("icl") && !j["icl"].is_null()) doc.icl = j["icl"].get<double>();
    if (j.contains("seed")) doc.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("parameter file: ") + e.what());
  }
  doc.params.validate();
  return doc;
}

void write_params(const std::filesystem::path& path, const ParamsDocument& doc) {
  write_file_atomic(path, format_params(doc));
}

ParamsDocument read_params(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_params(ss.str());
}

}  // namespace sbanm
