#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "demark/core/flow.hpp"

namespace demark {

// CSV with header `flow_id,timestamp_ms`. Flows keep first-appearance order.
// Values are written in shortest round-trip form, so save/load is bit-exact.

std::vector<FlowTrace> read_traces(std::istream& in);
void write_traces(std::ostream& out, const std::vector<FlowTrace>& traces);

std::vector<FlowTrace> load_traces(const std::filesystem::path& path);
void save_traces(const std::filesystem::path& path, const std::vector<FlowTrace>& traces);

}  // namespace demark
