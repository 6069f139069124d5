#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lantern/types.hpp"

namespace lantern {

// Dataset file: JSON Lines, one `{"events": [[t0, m0], [t1, m1], ...]}` per
// sequence. The optional ground-truth network lives next to it in
// `<path>.edges`: a header line `M <marker_count>` followed by one `i j` edge
// per line. When no network is present the marker count comes from the
// `<path>.meta` line `M <marker_count>`, or from the largest marker seen.

std::filesystem::path edges_sidecar(const std::filesystem::path& dataset);
std::filesystem::path meta_sidecar(const std::filesystem::path& dataset);
std::filesystem::path parents_sidecar(const std::filesystem::path& dataset);

Dataset read_dataset(const std::filesystem::path& path);
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);

/// Serialises one sequence as its JSONL line (no trailing newline).
std::string sequence_to_json_line(const EventSequence& seq);
EventSequence sequence_from_json_line(const std::string& line, std::size_t line_number);

RelationNetwork read_network(const std::filesystem::path& path);
void write_network(const RelationNetwork& net, const std::filesystem::path& path);

/// Debug sidecar with the simulator's parent index per event (-1 for sources).
void write_parents(const std::vector<std::vector<int>>& parents, const std::filesystem::path& path);
std::vector<std::vector<int>> read_parents(const std::filesystem::path& path);

/// Writes `contents` to a temporary file then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace lantern
