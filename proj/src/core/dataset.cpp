#include "demark/core/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "demark/core/error.hpp"
#include "demark/core/random.hpp"

namespace demark {

namespace {

std::vector<IpdSequence> gather(const std::vector<IpdSequence>& windows,
                                const std::vector<std::size_t>& indices) {
  std::vector<IpdSequence> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(windows.at(i));
  return out;
}

}  // namespace

std::vector<IpdSequence> Dataset::train_windows() const { return gather(windows, train); }
std::vector<IpdSequence> Dataset::test_windows() const { return gather(windows, test); }

Dataset split_dataset(std::vector<IpdSequence> windows, double train_fraction,
                      std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorKind::OutOfRange, "train fraction must be in (0, 1)");
  }
  Dataset ds;
  ds.windows = std::move(windows);
  std::vector<std::size_t> order(ds.windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  const auto cut = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(order.size())));
  ds.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut));
  ds.test.assign(order.begin() + static_cast<std::ptrdiff_t>(cut), order.end());
  return ds;
}

std::vector<IpdSequence> windows_from_traces(const std::vector<FlowTrace>& traces,
                                             std::size_t n) {
  std::vector<IpdSequence> out;
  for (const auto& trace : traces) {
    auto windowed = window_flow(ipds_from_timestamps(trace), n);
    for (auto& w : windowed.windows) out.push_back(std::move(w));
  }
  return out;
}

void save_manifest(const std::filesystem::path& path, const Dataset& dataset) {
  nlohmann::json j;
  j["train"] = dataset.train;
  j["test"] = dataset.test;
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << j.dump(1) << '\n';
}

void load_manifest(const std::filesystem::path& path, Dataset& dataset) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    dataset.train = j.at("train").get<std::vector<std::size_t>>();
    dataset.test = j.at("test").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, path.string() + ": " + e.what());
  }
  for (auto idx : dataset.train) {
    if (idx >= dataset.windows.size())
      throw Error(ErrorKind::Format, "manifest index out of range");
  }
  for (auto idx : dataset.test) {
    if (idx >= dataset.windows.size())
      throw Error(ErrorKind::Format, "manifest index out of range");
  }
  std::vector<std::size_t> a = dataset.train, b = dataset.test;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<std::size_t> both;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
  if (!both.empty()) throw Error(ErrorKind::Format, "train and test splits overlap");
}

}  // namespace demark
