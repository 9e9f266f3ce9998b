#include "htefuse/dataset.hpp"

#include "htefuse/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace htefuse {

namespace {

std::string join_rows(const std::vector<int>& rows) {
  std::ostringstream out;
  const std::size_t shown = std::min<std::size_t>(rows.size(), 10);
  for (std::size_t i = 0; i < shown; ++i) {
    if (i) out << ", ";
    out << rows[i];
  }
  if (rows.size() > shown) out << ", ... (" << rows.size() << " total)";
  return out.str();
}

}  // namespace

Dataset::Dataset(Eigen::VectorXd time, Eigen::VectorXi status, Eigen::VectorXi treatment,
                 Eigen::VectorXi source, Eigen::MatrixXd covariates)
    : time_(std::move(time)),
      status_(std::move(status)),
      treat_(std::move(treatment)),
      source_(std::move(source)),
      x_(std::move(covariates)) {
  const int n = static_cast<int>(time_.size());
  if (status_.size() != n || treat_.size() != n || source_.size() != n || x_.rows() != n) {
    throw DataError("dataset columns have mismatched lengths");
  }
  std::vector<int> bad_time, bad_flag, bad_cov;
  for (int i = 0; i < n; ++i) {
    if (!(time_[i] > 0.0) || !std::isfinite(time_[i])) bad_time.push_back(i + 1);
    if ((status_[i] != 0 && status_[i] != 1) || (treat_[i] != 0 && treat_[i] != 1) ||
        (source_[i] != 0 && source_[i] != 1)) {
      bad_flag.push_back(i + 1);
    }
    if (!x_.row(i).allFinite()) bad_cov.push_back(i + 1);
  }
  if (!bad_time.empty())
    throw DataError("nonpositive or non-finite time in rows: " + join_rows(bad_time));
  if (!bad_flag.empty())
    throw DataError("status/treat/source must be 0 or 1; offending rows: " + join_rows(bad_flag));
  if (!bad_cov.empty())
    throw DataError("non-finite covariates in rows: " + join_rows(bad_cov));
  log_time_ = time_.array().log().matrix();
  n1_ = source_.sum();
}

Observation Dataset::row(int i) const {
  Observation o;
  o.time = time_[i];
  o.status = status_[i];
  o.treatment = treat_[i];
  o.source = source_[i];
  o.covariates.assign(x_.row(i).data(), x_.row(i).data() + p());
  return o;
}

Dataset Dataset::subset(const std::vector<int>& rows) const {
  const int m = static_cast<int>(rows.size());
  Eigen::VectorXd t(m);
  Eigen::VectorXi st(m), tr(m), so(m);
  Eigen::MatrixXd xx(m, p());
  for (int i = 0; i < m; ++i) {
    const int r = rows[i];
    t[i] = time_[r];
    st[i] = status_[r];
    tr[i] = treat_[r];
    so[i] = source_[r];
    xx.row(i) = x_.row(r);
  }
  return Dataset(std::move(t), std::move(st), std::move(tr), std::move(so), std::move(xx));
}

Dataset Dataset::rct_only() const {
  std::vector<int> rows;
  for (int i = 0; i < n(); ++i)
    if (source_[i] == 1) rows.push_back(i);
  return subset(rows);
}

void Dataset::require_rct_rows() const {
  if (n1_ < 1) throw DataError("dataset has no RCT rows (source == 1)");
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, delim)) {
    // trim surrounding whitespace and a possible trailing \r
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == delim) out.push_back(std::string());
  return out;
}

char detect_delimiter(const std::string& header) {
  for (char c : {',', '\t', ';'})
    if (header.find(c) != std::string::npos) return c;
  return ',';
}

bool parse_double(const std::string& s, double* value) {
  if (s.empty()) return false;
  char* end = nullptr;
  *value = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(*value);
}

bool parse_binary(const std::string& s, int* value) {
  double v = 0;
  if (!parse_double(s, &v)) return false;
  if (v != 0.0 && v != 1.0) return false;
  *value = static_cast<int>(v);
  return true;
}

}  // namespace

Dataset load_dataset(const std::string& path, const ColumnMap& columns) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  std::string header;
  if (!std::getline(in, header)) throw DataError("empty file: " + path);
  const char delim = detect_delimiter(header);
  const std::vector<std::string> names = split_line(header, delim);

  std::map<std::string, int> index;
  for (int i = 0; i < static_cast<int>(names.size()); ++i) index[names[i]] = i;

  const std::array<const std::string*, 4> required = {&columns.time, &columns.status,
                                                      &columns.treatment, &columns.source};
  std::array<int, 4> req_idx{};
  for (std::size_t i = 0; i < required.size(); ++i) {
    auto it = index.find(*required[i]);
    if (it == index.end()) throw DataError("missing required column: " + *required[i]);
    req_idx[i] = it->second;
  }

  std::vector<int> cov_idx;
  if (columns.covariates.empty()) {
    for (int i = 0; i < static_cast<int>(names.size()); ++i) {
      if (std::find(req_idx.begin(), req_idx.end(), i) == req_idx.end()) cov_idx.push_back(i);
    }
  } else {
    for (const auto& name : columns.covariates) {
      auto it = index.find(name);
      if (it == index.end()) throw DataError("missing covariate column: " + name);
      cov_idx.push_back(it->second);
    }
  }
  const int p = static_cast<int>(cov_idx.size());

  std::vector<double> times;
  std::vector<int> status, treat, source;
  std::vector<double> covs;
  std::vector<int> bad_parse, bad_time, bad_flag, ragged;
  std::string line;
  int row = 1;  // data row number, 1-based
  while (std::getline(in, line)) {
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_line(line, delim);
    if (static_cast<int>(cells.size()) != static_cast<int>(names.size())) {
      ragged.push_back(row);
      ++row;
      continue;
    }
    double t = 0;
    int st = 0, tr = 0, so = 0;
    bool ok = parse_double(cells[req_idx[0]], &t);
    if (ok && !(t > 0.0)) {
      bad_time.push_back(row);
      ++row;
      continue;
    }
    if (!parse_binary(cells[req_idx[1]], &st) || !parse_binary(cells[req_idx[2]], &tr) ||
        !parse_binary(cells[req_idx[3]], &so)) {
      bad_flag.push_back(row);
      ++row;
      continue;
    }
    std::vector<double> xrow(p);
    for (int j = 0; j < p && ok; ++j) ok = parse_double(cells[cov_idx[j]], &xrow[j]);
    if (!ok) {
      bad_parse.push_back(row);
      ++row;
      continue;
    }
    times.push_back(t);
    status.push_back(st);
    treat.push_back(tr);
    source.push_back(so);
    covs.insert(covs.end(), xrow.begin(), xrow.end());
    ++row;
  }
  if (!ragged.empty()) throw DataError("ragged rows (wrong cell count): " + join_rows(ragged));
  if (!bad_time.empty()) throw DataError("nonpositive time in rows: " + join_rows(bad_time));
  if (!bad_flag.empty())
    throw DataError("non-binary status/treat/source in rows: " + join_rows(bad_flag));
  if (!bad_parse.empty())
    throw DataError("unparseable or missing numeric values in rows: " + join_rows(bad_parse));
  const int n = static_cast<int>(times.size());
  if (n == 0) throw DataError("no data rows in " + path);

  Eigen::VectorXd t = Eigen::Map<Eigen::VectorXd>(times.data(), n);
  Eigen::VectorXi st = Eigen::Map<Eigen::VectorXi>(status.data(), n);
  Eigen::VectorXi tr = Eigen::Map<Eigen::VectorXi>(treat.data(), n);
  Eigen::VectorXi so = Eigen::Map<Eigen::VectorXi>(source.data(), n);
  Eigen::MatrixXd x =
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          covs.data(), n, p);
  Dataset d(std::move(t), std::move(st), std::move(tr), std::move(so), std::move(x));
  d.require_rct_rows();
  return d;
}

void write_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write file: " + path);
  out << "time,status,treat,source";
  for (int j = 1; j <= d.p(); ++j) out << ",x" << j;
  out << "\n";
  char buf[32];
  for (int i = 0; i < d.n(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", d.time()[i]);
    out << buf << ',' << d.status()[i] << ',' << d.treatment()[i] << ',' << d.source()[i];
    for (int j = 0; j < d.p(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", d.x()(i, j));
      out << ',' << buf;
    }
    out << "\n";
  }
}

std::vector<int> FoldAssignment::members(int fold) const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(fold_of.size()); ++i)
    if (fold_of[i] == fold) out.push_back(i);
  return out;
}

std::vector<int> FoldAssignment::complement(int fold) const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(fold_of.size()); ++i)
    if (fold_of[i] != fold) out.push_back(i);
  return out;
}

FoldAssignment split_folds(const Dataset& d, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("split_folds: k must be >= 2");
  std::array<std::vector<int>, 4> strata;  // index = 2*source + treatment
  for (int i = 0; i < d.n(); ++i) strata[2 * d.source()[i] + d.treatment()[i]].push_back(i);

  for (int s = 0; s < 4; ++s) {
    if (!strata[s].empty() && static_cast<int>(strata[s].size()) < k) {
      throw std::invalid_argument(
          "split_folds: stratum (source=" + std::to_string(s / 2) +
          ", treat=" + std::to_string(s % 2) + ") has " + std::to_string(strata[s].size()) +
          " rows, fewer than k=" + std::to_string(k));
    }
  }

  FoldAssignment fa;
  fa.k = k;
  fa.seed = seed;
  fa.fold_of.assign(d.n(), -1);
  int offset = 0;  // rotates the leftover rows across strata so totals stay within 1
  for (int s = 0; s < 4; ++s) {
    auto& idx = strata[s];
    if (idx.empty()) continue;
    auto eng = make_engine(seed, 17 + s);
    std::shuffle(idx.begin(), idx.end(), eng);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      fa.fold_of[idx[i]] = static_cast<int>((i + offset) % k);
    }
    offset = (offset + static_cast<int>(idx.size())) % k;
  }
  return fa;
}

}  // namespace htefuse
