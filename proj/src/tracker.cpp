#include "wsml/tracker.hpp"

#include "text_io.hpp"

#include <fstream>
#include <limits>
#include <map>

namespace wsml {

MemorizationTracker::MemorizationTracker(Index samples, Index classes)
    : max_loss_(Matrix::Constant(samples, classes, -std::numeric_limits<Real>::infinity())),
      peak_epoch_(Eigen::MatrixXi::Zero(samples, classes)) {}

void MemorizationTracker::observe(Index sample, Index category, Real loss, int epoch) {
  if (epoch < 1 || epoch < epochs_seen_) {
    throw ContractError("tracker epochs must start at 1 and never go back");
  }
  epochs_seen_ = epoch;
  if (loss > max_loss_(sample, category)) {
    max_loss_(sample, category) = loss;
    peak_epoch_(sample, category) = epoch;
  }
}

MemorizationTracker MemorizationTracker::from_values(Matrix max_loss, Eigen::MatrixXi peak_epoch) {
  if (max_loss.rows() != peak_epoch.rows() || max_loss.cols() != peak_epoch.cols()) {
    throw ContractError("tracker tensors differ in shape");
  }
  MemorizationTracker t;
  t.epochs_seen_ = peak_epoch.size() ? peak_epoch.maxCoeff() : 0;
  t.max_loss_ = std::move(max_loss);
  t.peak_epoch_ = std::move(peak_epoch);
  return t;
}

void write_tracker(MemorizationTracker const &t, std::ostream &out,
                   std::vector<Index> const &row_ids, std::string const &header_comment) {
  if (static_cast<Index>(row_ids.size()) != t.rows()) {
    throw ContractError("tracker row ids do not match tracker rows");
  }
  if (!header_comment.empty()) out << '#' << header_comment << '\n';
  out << "sample,category,max_loss,peak_epoch\n";
  for (Index i = 0; i < t.rows(); ++i)
    for (Index k = 0; k < t.cols(); ++k)
      out << row_ids[static_cast<std::size_t>(i)] << ',' << k << ','
          << detail::format_real(t.max_loss(i, k)) << ',' << t.peak_epoch(i, k) << '\n';
}

MemorizationTracker read_tracker(std::istream &in, std::vector<Index> &row_ids) {
  detail::LineReader reader(in);
  if (reader.next("tracker header") != "sample,category,max_loss,peak_epoch") {
    throw ParseError("malformed tracker header", reader.line());
  }
  struct Entry {
    Real loss;
    int epoch;
  };
  std::map<Index, std::size_t> row_of;
  std::vector<std::map<Index, Entry>> rows;
  row_ids.clear();
  Index classes = 0;
  std::string line;
  while (reader.peek_content(line)) {
    std::vector<std::string_view> f;
    std::string_view rest = line;
    for (std::size_t p; (p = rest.find(',')) != std::string_view::npos; rest.remove_prefix(p + 1))
      f.push_back(rest.substr(0, p));
    f.push_back(rest);
    if (f.size() != 4) throw ParseError("expected 4 comma-separated fields", reader.line());
    auto const sample = static_cast<Index>(detail::parse_integer(f[0], reader.line()));
    auto const cat = static_cast<Index>(detail::parse_integer(f[1], reader.line()));
    Entry e{detail::parse_real(f[2], reader.line()),
            static_cast<int>(detail::parse_integer(f[3], reader.line()))};
    if (sample < 0 || cat < 0 || e.epoch < 0) {
      throw ParseError("negative tracker index", reader.line());
    }
    auto [it, inserted] = row_of.try_emplace(sample, rows.size());
    if (inserted) {
      rows.emplace_back();
      row_ids.push_back(sample);
    }
    if (!rows[it->second].emplace(cat, e).second) {
      throw ParseError("duplicate tracker entry", reader.line());
    }
    classes = std::max(classes, cat + 1);
  }
  Matrix loss(static_cast<Index>(rows.size()), classes);
  Eigen::MatrixXi epoch(static_cast<Index>(rows.size()), classes);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<Index>(rows[i].size()) != classes) {
      throw Error("tracker dump is missing categories for sample " + std::to_string(row_ids[i]));
    }
    for (auto const &[k, e] : rows[i]) {
      loss(static_cast<Index>(i), k) = e.loss;
      epoch(static_cast<Index>(i), k) = e.epoch;
    }
  }
  return MemorizationTracker::from_values(std::move(loss), std::move(epoch));
}

void save_tracker(MemorizationTracker const &t, std::filesystem::path const &path,
                  std::vector<Index> const &row_ids, std::string const &header_comment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  write_tracker(t, out, row_ids, header_comment);
}

MemorizationTracker load_tracker(std::filesystem::path const &path, std::vector<Index> &row_ids) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return read_tracker(in, row_ids);
}

} // namespace wsml
