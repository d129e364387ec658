#include "mopo/dataset.hpp"

#include <fstream>
#include <sstream>

namespace mopo {

namespace {

using Index = Eigen::Index;

Mat columns_from(const std::vector<double>& flat, int rows) {
  const Index n = rows == 0 ? 0 : static_cast<Index>(flat.size()) / rows;
  return Eigen::Map<const Mat>(flat.data(), rows, n);
}

std::vector<double> column_values(const Mat& m, Index c) {
  return std::vector<double>(m.col(c).data(), m.col(c).data() + m.rows());
}

}  // namespace

TransitionDataset::TransitionDataset(Mat states, Mat actions, Vec rewards, Mat next_states, std::vector<char> dones,
                                     DatasetMeta meta)
    : states_(std::move(states)),
      actions_(std::move(actions)),
      rewards_(std::move(rewards)),
      next_states_(std::move(next_states)),
      dones_(std::move(dones)),
      meta_(std::move(meta)) {
  validate();
}

void TransitionDataset::validate() const {
  const auto n = rewards_.size();
  if (states_.cols() != n || actions_.cols() != n || next_states_.cols() != n ||
      dones_.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("dataset arrays must have equal length");
  }
  if (states_.rows() != next_states_.rows()) throw std::invalid_argument("state and next-state dims differ");
  if (!states_.allFinite() || !actions_.allFinite() || !rewards_.allFinite() || !next_states_.allFinite()) {
    throw std::invalid_argument("dataset contains non-finite entries");
  }
}

TransitionDataset TransitionDataset::with_rewards(Vec rewards) const {
  if (rewards.size() != rewards_.size()) throw std::invalid_argument("reward vector length mismatch");
  return TransitionDataset(states_, actions_, std::move(rewards), next_states_, dones_, meta_);
}

TransitionDataset TransitionDataset::select(const std::vector<std::size_t>& indices) const {
  const auto n = static_cast<Index>(indices.size());
  Mat s(states_.rows(), n), a(actions_.rows(), n), s2(next_states_.rows(), n);
  Vec r(n);
  std::vector<char> d(indices.size());
  for (Index k = 0; k < n; ++k) {
    const auto i = static_cast<Index>(indices[static_cast<std::size_t>(k)]);
    if (i >= rewards_.size()) throw std::out_of_range("dataset index out of range");
    s.col(k) = states_.col(i);
    a.col(k) = actions_.col(i);
    s2.col(k) = next_states_.col(i);
    r(k) = rewards_(i);
    d[static_cast<std::size_t>(k)] = dones_[static_cast<std::size_t>(i)];
  }
  DatasetMeta meta = meta_;
  meta.segments.clear();
  return TransitionDataset(std::move(s), std::move(a), std::move(r), std::move(s2), std::move(d), std::move(meta));
}

TransitionDataset TransitionDataset::concat(const TransitionDataset& tail) const {
  if (empty()) return tail;
  if (tail.state_dim() != state_dim() || tail.action_dim() != action_dim()) {
    throw std::invalid_argument("cannot concatenate datasets of different dims");
  }
  const Index n = rewards_.size() + tail.rewards_.size();
  Mat s(states_.rows(), n), a(actions_.rows(), n), s2(next_states_.rows(), n);
  Vec r(n);
  s << states_, tail.states_;
  a << actions_, tail.actions_;
  s2 << next_states_, tail.next_states_;
  r << rewards_, tail.rewards_;
  std::vector<char> d = dones_;
  d.insert(d.end(), tail.dones_.begin(), tail.dones_.end());
  DatasetMeta meta = meta_;
  for (auto seg : tail.meta_.segments) {
    seg.begin += size();
    meta.segments.push_back(seg);
  }
  return TransitionDataset(std::move(s), std::move(a), std::move(r), std::move(s2), std::move(d), std::move(meta));
}

void DatasetBuilder::add(const Vec& s, const Vec& a, double r, const Vec& s_next, bool done) {
  if (s.size() != state_dim_ || s_next.size() != state_dim_ || a.size() != action_dim_) {
    throw std::invalid_argument("record dims do not match the builder");
  }
  states_.insert(states_.end(), s.data(), s.data() + s.size());
  actions_.insert(actions_.end(), a.data(), a.data() + a.size());
  next_states_.insert(next_states_.end(), s_next.data(), s_next.data() + s_next.size());
  rewards_.push_back(r);
  dones_.push_back(done ? 1 : 0);
}

TransitionDataset DatasetBuilder::build(DatasetMeta meta) const {
  Mat s = columns_from(states_, state_dim_);
  Mat a = columns_from(actions_, action_dim_);
  Mat s2 = columns_from(next_states_, state_dim_);
  if (s.cols() != static_cast<Index>(rewards_.size())) {
    s.resize(state_dim_, 0);
    s2.resize(state_dim_, 0);
  }
  if (a.cols() != static_cast<Index>(rewards_.size())) a.resize(action_dim_, 0);
  Vec r = Eigen::Map<const Vec>(rewards_.data(), static_cast<Index>(rewards_.size()));
  return TransitionDataset(std::move(s), std::move(a), std::move(r), std::move(s2), dones_, std::move(meta));
}

nlohmann::json dataset_header(const TransitionDataset& data) {
  const auto& m = data.meta();
  nlohmann::json segments = nlohmann::json::array();
  for (const auto& seg : m.segments) {
    segments.push_back({{"source", seg.source}, {"begin", seg.begin}, {"count", seg.count}});
  }
  return nlohmann::json{{"format", "mopo-kit-transitions"},
                        {"version", 1},
                        {"state_dim", data.state_dim()},
                        {"action_dim", data.action_dim()},
                        {"n_records", data.size()},
                        {"env", m.env_name},
                        {"behavior_kind", m.behavior_kind},
                        {"seed", m.seed},
                        {"reward", m.reward_name},
                        {"original_reward", m.original_reward},
                        {"segments", segments}};
}

std::filesystem::path header_path_for(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".header.json");
}

void write_dataset(const TransitionDataset& data, const std::filesystem::path& path) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    for (Index i = 0; i < static_cast<Index>(data.size()); ++i) {
      nlohmann::json rec{{"s", column_values(data.states(), i)},
                         {"a", column_values(data.actions(), i)},
                         {"r", data.rewards()(i)},
                         {"s2", column_values(data.next_states(), i)},
                         {"d", data.dones()[static_cast<std::size_t>(i)] != 0}};
      out << rec.dump() << '\n';
    }
  }
  std::ofstream header(header_path_for(path), std::ios::binary);
  if (!header) throw std::runtime_error("cannot write dataset header");
  header << dataset_header(data).dump(2) << '\n';
}

TransitionDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream header_in(header_path_for(path));
  if (!header_in) throw std::runtime_error("missing dataset header for " + path.string());
  const auto header = nlohmann::json::parse(header_in);
  const int ds = header.at("state_dim").get<int>();
  const int da = header.at("action_dim").get<int>();
  DatasetMeta meta;
  meta.env_name = header.value("env", "");
  meta.behavior_kind = header.value("behavior_kind", "");
  meta.seed = header.value("seed", std::uint64_t{0});
  meta.reward_name = header.value("reward", "");
  meta.original_reward = header.value("original_reward", "");
  if (header.contains("segments")) {
    for (const auto& seg : header.at("segments")) {
      meta.segments.push_back(
          {seg.at("source").get<std::string>(), seg.at("begin").get<std::size_t>(), seg.at("count").get<std::size_t>()});
    }
  }
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  DatasetBuilder builder(ds, da);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto rec = nlohmann::json::parse(line);
    const auto s = rec.at("s").get<std::vector<double>>();
    const auto a = rec.at("a").get<std::vector<double>>();
    const auto s2 = rec.at("s2").get<std::vector<double>>();
    if (static_cast<int>(s.size()) != ds || static_cast<int>(s2.size()) != ds || static_cast<int>(a.size()) != da) {
      throw std::invalid_argument("record " + std::to_string(line_no) + " has wrong dimensions");
    }
    builder.add(to_vec(s), to_vec(a), rec.at("r").get<double>(), to_vec(s2), rec.at("d").get<bool>());
  }
  const auto expected = header.at("n_records").get<std::size_t>();
  if (builder.size() != expected) throw std::invalid_argument("record count differs from header");
  return builder.build(std::move(meta));
}

}  // namespace mopo
