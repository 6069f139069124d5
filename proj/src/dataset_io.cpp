#include "lantern/dataset_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace lantern {

namespace fs = std::filesystem;

namespace {

fs::path with_suffix(const fs::path& p, const char* suffix) {
  fs::path out = p;
  out += suffix;
  return out;
}

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

fs::path edges_sidecar(const fs::path& dataset) { return with_suffix(dataset, ".edges"); }
fs::path meta_sidecar(const fs::path& dataset) { return with_suffix(dataset, ".meta"); }
fs::path parents_sidecar(const fs::path& dataset) { return with_suffix(dataset, ".parents"); }

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + tmp.string());
    out << contents;
    if (!out) throw Error(Errc::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(Errc::IoError, "cannot rename onto " + path.string() + ": " + ec.message());
}

std::string sequence_to_json_line(const EventSequence& seq) {
  nlohmann::json events = nlohmann::json::array();
  for (const Event& e : seq) events.push_back({e.time, e.marker});
  return nlohmann::json{{"events", std::move(events)}}.dump();
}

EventSequence sequence_from_json_line(const std::string& line, std::size_t line_number) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(line_number, e.what());
  }
  if (!j.is_object() || !j.contains("events") || !j["events"].is_array()) {
    throw ParseError(line_number, "expected an object with an \"events\" array");
  }
  EventSequence seq;
  seq.reserve(j["events"].size());
  for (const auto& pair : j["events"]) {
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() || !pair[1].is_number_integer()) {
      throw ParseError(line_number, "each event must be [time, marker]");
    }
    seq.push_back({pair[0].get<double>(), pair[1].get<MarkerId>()});
  }
  return seq;
}

RelationNetwork read_network(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::string line;
  std::size_t line_number = 0;
  std::optional<RelationNetwork> net;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (!net) {
      std::string tag;
      long long m = -1;
      if (!(ls >> tag >> m) || tag != "M" || m < 0) throw ParseError(line_number, "expected header `M <marker_count>`");
      net.emplace(static_cast<std::size_t>(m));
      continue;
    }
    long long i = 0, j = 0;
    if (!(ls >> i >> j)) throw ParseError(line_number, "expected `i j`");
    try {
      net->add_edge(static_cast<MarkerId>(i), static_cast<MarkerId>(j));
    } catch (const Error& e) {
      throw ParseError(line_number, e.what());
    }
  }
  if (!net) throw ParseError(line_number, "missing header line");
  return *net;
}

void write_network(const RelationNetwork& net, const fs::path& path) {
  std::ostringstream os;
  os << "M " << net.marker_count() << "\n";
  for (const auto& [i, j] : net.edges()) os << i << " " << j << "\n";
  write_file_atomic(path, os.str());
}

Dataset read_dataset(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  Dataset d;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    d.sequences.push_back(sequence_from_json_line(line, line_number));
  }
  if (fs::exists(edges_sidecar(path))) {
    d.ground_truth = read_network(edges_sidecar(path));
    d.marker_count = d.ground_truth->marker_count();
  } else if (fs::exists(meta_sidecar(path))) {
    std::istringstream ms(read_all(meta_sidecar(path)));
    std::string tag;
    long long m = -1;
    if (!(ms >> tag >> m) || tag != "M" || m < 0) throw ParseError(1, "bad meta sidecar " + meta_sidecar(path).string());
    d.marker_count = static_cast<std::size_t>(m);
  } else {
    MarkerId mx = -1;
    for (const auto& s : d.sequences)
      for (const Event& e : s) mx = std::max(mx, e.marker);
    d.marker_count = static_cast<std::size_t>(mx + 1);
  }
  for (std::size_t s = 0; s < d.sequences.size(); ++s) {
    if (auto err = validate_sequence(d.sequences[s], d.marker_count)) {
      throw Error(err->code(), "sequence " + std::to_string(s) + ": " + err->what());
    }
  }
  return d;
}

void write_dataset(const Dataset& dataset, const fs::path& path) {
  std::string body;
  for (const auto& seq : dataset.sequences) {
    body += sequence_to_json_line(seq);
    body += '\n';
  }
  write_file_atomic(path, body);
  if (dataset.ground_truth) {
    write_network(*dataset.ground_truth, edges_sidecar(path));
  } else {
    write_file_atomic(meta_sidecar(path), "M " + std::to_string(dataset.marker_count) + "\n");
  }
}

void write_parents(const std::vector<std::vector<int>>& parents, const fs::path& path) {
  std::ostringstream os;
  for (const auto& row : parents) {
    for (std::size_t k = 0; k < row.size(); ++k) os << (k ? " " : "") << row[k];
    os << "\n";
  }
  write_file_atomic(path, os.str());
}

std::vector<std::vector<int>> read_parents(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::vector<std::vector<int>> out;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<int> row;
    int v = 0;
    while (ls >> v) row.push_back(v);
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace lantern
