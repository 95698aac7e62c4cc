#pragma once

// Interaction-log ingestion, dataset serialization, train/test splitting and
// the per-question side information derived from the training split
// (correct-answer ratio and attribute features).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pebg/error.hpp"
#include "pebg/tensor.hpp"

namespace pebg {

inline constexpr int kDatasetFormatVersion = 1;

/// Bijection between raw identifiers and dense indices, in first-seen order.
class IdMap {
 public:
  std::size_t size() const noexcept { return names_.size(); }

  std::size_t intern(const std::string& name) {
    auto [it, inserted] = index_.try_emplace(name, names_.size());
    if (inserted) names_.push_back(name);
    return it->second;
  }

  std::optional<std::size_t> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& name(std::size_t index) const { return names_.at(index); }
  const std::vector<std::string>& names() const noexcept { return names_; }

  bool operator==(const IdMap& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct InteractionRecord {
  std::size_t question_index = 0;
  std::vector<std::size_t> skill_indices;  // sorted, unique, non-empty
  bool correct = false;
  std::optional<double> response_time;  // milliseconds
  std::optional<std::string> question_type;
  std::size_t position = 0;

  bool operator==(const InteractionRecord&) const = default;
};

struct StudentSequence {
  std::string student_id;
  std::vector<InteractionRecord> records;

  bool operator==(const StudentSequence&) const = default;
};

struct InteractionDataset {
  std::vector<StudentSequence> students;
  std::size_t num_questions = 0;
  std::size_t num_skills = 0;
  IdMap question_ids;
  IdMap skill_ids;

  std::size_t num_records() const {
    std::size_t n = 0;
    for (const auto& s : students) n += s.records.size();
    return n;
  }

  bool operator==(const InteractionDataset& o) const {
    return num_questions == o.num_questions && num_skills == o.num_skills &&
           question_ids == o.question_ids && skill_ids == o.skill_ids && students == o.students;
  }
};

/// Throws DataError describing the first violated invariant.
inline void validate(const InteractionDataset& ds, std::size_t min_seq_len = 1) {
  if (ds.question_ids.size() != ds.num_questions || ds.skill_ids.size() != ds.num_skills)
    throw DataError("id map sizes disagree with declared counts");
  for (const auto& s : ds.students) {
    if (s.records.size() < min_seq_len)
      throw DataError("student " + s.student_id + " has fewer than " + std::to_string(min_seq_len) +
                      " records");
    for (std::size_t t = 0; t < s.records.size(); ++t) {
      const auto& r = s.records[t];
      if (r.position != t) throw DataError("student " + s.student_id + " has a position gap");
      if (r.question_index >= ds.num_questions) throw DataError("question index out of range");
      if (r.skill_indices.empty()) throw DataError("record without skills");
      for (std::size_t k : r.skill_indices)
        if (k >= ds.num_skills) throw DataError("skill index out of range");
    }
  }
}

// ---------------------------------------------------------------------------
// CSV ingestion

struct ColumnFilter {
  std::string column;
  std::string value;
};

struct IngestOptions {
  std::size_t min_seq_len = 3;
  /// Rows are kept only when every filter column equals its value.
  std::vector<ColumnFilter> filters;
};

struct IngestReport {
  std::size_t rows_read = 0;
  std::size_t dropped_no_skill = 0;
  std::size_t dropped_by_filter = 0;
  std::size_t removed_students = 0;
  std::size_t removed_short_records = 0;
};

namespace detail {

/// Splits one CSV line; supports double-quoted fields with "" escapes.
inline std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && field.empty() && !was_quoted) {
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
      was_quoted = false;
    } else {
      field.push_back(c);
    }
  }
  if (quoted) throw ParseError(line_no, "unterminated quoted field");
  out.push_back(std::move(field));
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::vector<std::string> split_skills(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find(';', start);
    if (end == std::string_view::npos) end = s.size();
    auto part = trim(s.substr(start, end - start));
    if (!part.empty()) out.emplace_back(part);
    start = end + 1;
  }
  return out;
}

struct RawRow {
  std::size_t student_slot;
  std::string question;
  std::vector<std::string> skills;
  bool correct;
  std::optional<double> response_time;
  std::optional<std::string> question_type;
};

}  // namespace detail

/// Parses the interaction CSV (header required; columns student_id,
/// question_id, skill_ids, correct and optionally response_time_ms,
/// question_type; extra columns are permitted and only used by filters).
/// Records keep file order within each student. Index maps are assigned in
/// first-seen order over the rows that survive filtering.
inline InteractionDataset ingest(std::istream& in, const IngestOptions& options,
                                 IngestReport* report = nullptr) {
  IngestReport local;
  IngestReport& rep = report ? *report : local;
  rep = IngestReport{};

  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) {
      header = detail::split_csv_line(detail::trim(line), line_no);
      break;
    }
  }
  if (header.empty()) throw ParseError(line_no, "missing CSV header");

  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column[std::string(detail::trim(header[i]))] = i;
  auto require = [&](const char* name) {
    auto it = column.find(name);
    if (it == column.end()) throw ParseError(1, std::string("header lacks column ") + name);
    return it->second;
  };
  auto optional_col = [&](const char* name) -> std::optional<std::size_t> {
    auto it = column.find(name);
    if (it == column.end()) return std::nullopt;
    return it->second;
  };
  const std::size_t c_student = require("student_id");
  const std::size_t c_question = require("question_id");
  const std::size_t c_skills = require("skill_ids");
  const std::size_t c_correct = require("correct");
  const auto c_time = optional_col("response_time_ms");
  const auto c_type = optional_col("question_type");
  std::vector<std::pair<std::size_t, std::string>> filters;
  for (const auto& f : options.filters) {
    auto it = column.find(f.column);
    if (it == column.end()) throw ConfigError("filter column not in header: " + f.column);
    filters.emplace_back(it->second, f.value);
  }

  std::vector<detail::RawRow> rows;
  std::vector<std::string> student_names;
  std::vector<std::size_t> student_counts;
  std::unordered_map<std::string, std::size_t> student_slot;

  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    auto fields = detail::split_csv_line(trimmed, line_no);
    if (fields.size() != header.size())
      throw ParseError(line_no, "expected " + std::to_string(header.size()) + " columns, got " +
                                    std::to_string(fields.size()));
    ++rep.rows_read;

    bool keep = true;
    for (const auto& [col, value] : filters) {
      if (detail::trim(fields[col]) != value) keep = false;
    }
    if (!keep) {
      ++rep.dropped_by_filter;
      continue;
    }

    const auto correct = detail::trim(fields[c_correct]);
    if (correct != "0" && correct != "1")
      throw ParseError(line_no, "correct must be 0 or 1, got '" + std::string(correct) + "'");

    std::optional<double> rt;
    if (c_time && !detail::trim(fields[*c_time]).empty()) {
      rt = detail::parse_double(fields[*c_time]);
      if (!rt || *rt < 0.0 || !std::isfinite(*rt))
        throw ParseError(line_no, "response_time_ms must be a non-negative number");
    }
    std::optional<std::string> qtype;
    if (c_type && !detail::trim(fields[*c_type]).empty()) qtype = std::string(detail::trim(fields[*c_type]));

    const std::string student(detail::trim(fields[c_student]));
    const std::string question(detail::trim(fields[c_question]));
    if (student.empty() || question.empty()) throw ParseError(line_no, "empty student_id or question_id");

    auto skills = detail::split_skills(fields[c_skills]);
    if (skills.empty()) {
      ++rep.dropped_no_skill;
      continue;
    }

    auto [it, inserted] = student_slot.try_emplace(student, student_names.size());
    if (inserted) {
      student_names.push_back(student);
      student_counts.push_back(0);
    }
    ++student_counts[it->second];
    rows.push_back({it->second, question, std::move(skills), correct == "1", rt, std::move(qtype)});
  }

  std::vector<std::size_t> out_slot(student_names.size(), SIZE_MAX);
  InteractionDataset ds;
  for (std::size_t s = 0; s < student_names.size(); ++s) {
    if (student_counts[s] < options.min_seq_len) {
      ++rep.removed_students;
      rep.removed_short_records += student_counts[s];
      continue;
    }
    out_slot[s] = ds.students.size();
    ds.students.push_back({student_names[s], {}});
  }

  for (auto& row : rows) {
    const std::size_t slot = out_slot[row.student_slot];
    if (slot == SIZE_MAX) continue;
    InteractionRecord rec;
    rec.question_index = ds.question_ids.intern(row.question);
    for (const auto& sk : row.skills) rec.skill_indices.push_back(ds.skill_ids.intern(sk));
    std::sort(rec.skill_indices.begin(), rec.skill_indices.end());
    rec.skill_indices.erase(std::unique(rec.skill_indices.begin(), rec.skill_indices.end()),
                            rec.skill_indices.end());
    rec.correct = row.correct;
    rec.response_time = row.response_time;
    rec.question_type = std::move(row.question_type);
    auto& seq = ds.students[slot].records;
    rec.position = seq.size();
    seq.push_back(std::move(rec));
  }
  ds.num_questions = ds.question_ids.size();
  ds.num_skills = ds.skill_ids.size();

  if (ds.students.empty()) throw DataError("dataset is empty after filtering");
  return ds;
}

inline InteractionDataset ingest_file(const std::string& path, const IngestOptions& options,
                                      IngestReport* report = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return ingest(in, options, report);
}

// ---------------------------------------------------------------------------
// Serialized dataset, tab separated:
//
//   pebg-dataset <version>
//   counts <students> <questions> <skills> <records>
//   question <raw id>                      (one per question, index order)
//   skill <raw id>                         (one per skill, index order)
//   student <id> <num records>             (then that many record lines)
//   <question index> <skill;skill> <0|1> <response ms or empty> <type or empty>

namespace detail {

inline void check_token(const std::string& s, const char* what) {
  if (s.find_first_of("\t\n\r") != std::string::npos)
    throw DataError(std::string(what) + " contains a tab or newline: " + s);
}

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t end = line.find('\t', start);
    if (end == std::string::npos) {
      std::string last = line.substr(start);
      if (!last.empty() && last.back() == '\r') last.pop_back();
      out.push_back(std::move(last));
      return out;
    }
    out.push_back(line.substr(start, end - start));
    start = end + 1;
  }
}

inline std::size_t parse_index(const std::string& s, std::size_t line_no) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ParseError(line_no, "expected a non-negative integer, got '" + s + "'");
  return v;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline void write_dataset(std::ostream& out, const InteractionDataset& ds) {
  out << "pebg-dataset\t" << kDatasetFormatVersion << '\n';
  out << "counts\t" << ds.students.size() << '\t' << ds.num_questions << '\t' << ds.num_skills << '\t'
      << ds.num_records() << '\n';
  for (const auto& q : ds.question_ids.names()) {
    detail::check_token(q, "question id");
    out << "question\t" << q << '\n';
  }
  for (const auto& s : ds.skill_ids.names()) {
    detail::check_token(s, "skill id");
    out << "skill\t" << s << '\n';
  }
  for (const auto& st : ds.students) {
    detail::check_token(st.student_id, "student id");
    out << "student\t" << st.student_id << '\t' << st.records.size() << '\n';
    for (const auto& r : st.records) {
      out << r.question_index << '\t';
      for (std::size_t k = 0; k < r.skill_indices.size(); ++k) out << (k ? ";" : "") << r.skill_indices[k];
      out << '\t' << (r.correct ? 1 : 0) << '\t';
      if (r.response_time) out << detail::format_double(*r.response_time);
      out << '\t';
      if (r.question_type) {
        detail::check_token(*r.question_type, "question type");
        out << *r.question_type;
      }
      out << '\n';
    }
  }
}

inline InteractionDataset read_dataset(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto next = [&]() -> std::vector<std::string> {
    if (!std::getline(in, line)) throw ParseError(line_no, "unexpected end of dataset file");
    ++line_no;
    return detail::split_tabs(line);
  };

  auto head = next();
  if (head.size() != 2 || head[0] != "pebg-dataset") throw ParseError(line_no, "not a pebg dataset file");
  if (detail::parse_index(head[1], line_no) != kDatasetFormatVersion)
    throw ParseError(line_no, "unsupported dataset format version " + head[1]);
  auto counts = next();
  if (counts.size() != 5 || counts[0] != "counts") throw ParseError(line_no, "expected counts line");
  const std::size_t n_students = detail::parse_index(counts[1], line_no);
  const std::size_t n_questions = detail::parse_index(counts[2], line_no);
  const std::size_t n_skills = detail::parse_index(counts[3], line_no);
  const std::size_t n_records = detail::parse_index(counts[4], line_no);

  InteractionDataset ds;
  for (std::size_t i = 0; i < n_questions; ++i) {
    auto f = next();
    if (f.size() != 2 || f[0] != "question") throw ParseError(line_no, "expected question line");
    if (ds.question_ids.intern(f[1]) != i) throw ParseError(line_no, "duplicate question id " + f[1]);
  }
  for (std::size_t i = 0; i < n_skills; ++i) {
    auto f = next();
    if (f.size() != 2 || f[0] != "skill") throw ParseError(line_no, "expected skill line");
    if (ds.skill_ids.intern(f[1]) != i) throw ParseError(line_no, "duplicate skill id " + f[1]);
  }
  ds.num_questions = n_questions;
  ds.num_skills = n_skills;

  std::size_t seen_records = 0;
  for (std::size_t s = 0; s < n_students; ++s) {
    auto f = next();
    if (f.size() != 3 || f[0] != "student") throw ParseError(line_no, "expected student line");
    StudentSequence seq{f[1], {}};
    const std::size_t len = detail::parse_index(f[2], line_no);
    for (std::size_t t = 0; t < len; ++t) {
      auto r = next();
      if (r.size() != 5) throw ParseError(line_no, "record line needs 5 fields");
      InteractionRecord rec;
      rec.question_index = detail::parse_index(r[0], line_no);
      if (rec.question_index >= n_questions) throw ParseError(line_no, "question index out of range");
      for (const auto& sk : detail::split_skills(r[1])) {
        rec.skill_indices.push_back(detail::parse_index(sk, line_no));
        if (rec.skill_indices.back() >= n_skills) throw ParseError(line_no, "skill index out of range");
      }
      if (rec.skill_indices.empty()) throw ParseError(line_no, "record without skills");
      if (r[2] != "0" && r[2] != "1") throw ParseError(line_no, "correct must be 0 or 1");
      rec.correct = r[2] == "1";
      if (!r[3].empty()) {
        rec.response_time = detail::parse_double(r[3]);
        if (!rec.response_time) throw ParseError(line_no, "bad response time");
      }
      if (!r[4].empty()) rec.question_type = r[4];
      rec.position = t;
      seq.records.push_back(std::move(rec));
    }
    seen_records += len;
    ds.students.push_back(std::move(seq));
  }
  if (seen_records != n_records) throw ParseError(line_no, "record count mismatch");
  return ds;
}

inline void save_dataset(const std::string& path, const InteractionDataset& ds) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  write_dataset(out, ds);
  if (!out) throw IoError("write failed for " + path);
}

inline InteractionDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_dataset(in);
}

// ---------------------------------------------------------------------------
// Splitting

/// Copy of `ds` restricted to the given students (index maps unchanged).
inline InteractionDataset subset(const InteractionDataset& ds, const std::vector<std::size_t>& student_indices) {
  InteractionDataset out;
  out.num_questions = ds.num_questions;
  out.num_skills = ds.num_skills;
  out.question_ids = ds.question_ids;
  out.skill_ids = ds.skill_ids;
  out.students.reserve(student_indices.size());
  for (std::size_t i : student_indices) out.students.push_back(ds.students.at(i));
  return out;
}

struct DatasetSplit {
  std::vector<std::size_t> train_students;
  std::vector<std::size_t> test_students;
};

/// Student-level partition. The train side receives round(fraction * n)
/// students, clamped so that both sides are non-empty. Each side lists
/// student indices in ascending order.
inline DatasetSplit split_students(std::size_t num_students, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw DataError("train fraction must lie strictly between 0 and 1");
  if (num_students < 2) throw DataError("cannot split fewer than 2 students");
  std::vector<std::size_t> order(num_students);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(num_students)));
  n_train = std::clamp<std::size_t>(n_train, 1, num_students - 1);
  DatasetSplit out;
  out.train_students.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.test_students.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(out.train_students.begin(), out.train_students.end());
  std::sort(out.test_students.begin(), out.test_students.end());
  return out;
}

inline std::pair<InteractionDataset, InteractionDataset> split(const InteractionDataset& ds, double train_fraction,
                                                               std::uint64_t seed) {
  const auto parts = split_students(ds.students.size(), train_fraction, seed);
  return {subset(ds, parts.train_students), subset(ds, parts.test_students)};
}

// ---------------------------------------------------------------------------
// Correct-answer ratio per question

struct DifficultyVector {
  std::vector<double> values;
  std::vector<bool> observed;
  std::vector<std::size_t> attempts;
  std::vector<std::size_t> correct;

  std::size_t size() const noexcept { return values.size(); }
};

inline constexpr double kUnobservedDifficulty = 0.5;

inline DifficultyVector compute_difficulty(const InteractionDataset& train) {
  if (train.students.empty()) throw DataError("difficulty needs a non-empty training set");
  DifficultyVector d;
  d.values.assign(train.num_questions, kUnobservedDifficulty);
  d.observed.assign(train.num_questions, false);
  d.attempts.assign(train.num_questions, 0);
  d.correct.assign(train.num_questions, 0);
  for (const auto& s : train.students) {
    for (const auto& r : s.records) {
      ++d.attempts[r.question_index];
      if (r.correct) ++d.correct[r.question_index];
    }
  }
  for (std::size_t q = 0; q < train.num_questions; ++q) {
    if (d.attempts[q] == 0) continue;
    d.observed[q] = true;
    d.values[q] = static_cast<double>(d.correct[q]) / static_cast<double>(d.attempts[q]);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Attribute features

enum class AttributeKind { kNumerical, kCategorical };

struct AttributeBlock {
  std::string name;
  AttributeKind kind = AttributeKind::kNumerical;
  std::size_t offset = 0;
  std::size_t width = 0;
  std::vector<std::string> categories;  // categorical only, first-seen order
  double mean = 0.0;                    // numerical only, over observed questions
  double stddev = 1.0;
};

struct AttributeFeatures {
  Matrix values;  // num_questions x width
  std::vector<AttributeBlock> layout;

  std::size_t width() const noexcept { return values.cols(); }
};

inline const std::vector<std::string>& known_attribute_names() {
  static const std::vector<std::string> names{"response_time", "question_type"};
  return names;
}

/// Builds per-question attribute vectors from the training split.
/// "response_time": mean response time over the question's attempts, z-scored
/// across questions that have at least one timed attempt; others get 0.
/// "question_type": one-hot of the question's modal label (ties go to the
/// label seen first for that question); unlabeled questions get all zeros.
inline AttributeFeatures compute_attributes(const InteractionDataset& train,
                                            const std::vector<std::string>& feature_selection) {
  AttributeFeatures out;
  std::size_t offset = 0;
  std::vector<std::vector<double>> columns;

  for (const auto& name : feature_selection) {
    const auto& known = known_attribute_names();
    if (std::find(known.begin(), known.end(), name) == known.end())
      throw ConfigError("unknown attribute feature: " + name);
    for (const auto& b : out.layout)
      if (b.name == name) throw ConfigError("attribute feature listed twice: " + name);

    AttributeBlock block;
    block.name = name;
    block.offset = offset;

    if (name == "response_time") {
      block.kind = AttributeKind::kNumerical;
      block.width = 1;
      std::vector<double> sum(train.num_questions, 0.0);
      std::vector<std::size_t> count(train.num_questions, 0);
      for (const auto& s : train.students)
        for (const auto& r : s.records)
          if (r.response_time) {
            sum[r.question_index] += *r.response_time;
            ++count[r.question_index];
          }
      std::vector<double> col(train.num_questions, 0.0);
      double total = 0.0;
      std::size_t n_obs = 0;
      for (std::size_t q = 0; q < train.num_questions; ++q) {
        if (count[q] == 0) continue;
        col[q] = sum[q] / static_cast<double>(count[q]);
        total += col[q];
        ++n_obs;
      }
      if (n_obs > 0) {
        block.mean = total / static_cast<double>(n_obs);
        double var = 0.0;
        for (std::size_t q = 0; q < train.num_questions; ++q)
          if (count[q] > 0) var += (col[q] - block.mean) * (col[q] - block.mean);
        var /= static_cast<double>(n_obs);
        block.stddev = var > 0.0 ? std::sqrt(var) : 1.0;
      }
      for (std::size_t q = 0; q < train.num_questions; ++q)
        col[q] = count[q] > 0 ? (col[q] - block.mean) / block.stddev : 0.0;
      columns.push_back(std::move(col));
    } else {
      block.kind = AttributeKind::kCategorical;
      std::unordered_map<std::string, std::size_t> category_index;
      // Per question: label -> (count, first position within that question).
      std::vector<std::map<std::size_t, std::pair<std::size_t, std::size_t>>> tallies(train.num_questions);
      std::vector<std::size_t> seen(train.num_questions, 0);
      for (const auto& s : train.students)
        for (const auto& r : s.records) {
          if (!r.question_type) continue;
          auto [it, inserted] = category_index.try_emplace(*r.question_type, block.categories.size());
          if (inserted) block.categories.push_back(*r.question_type);
          auto& t = tallies[r.question_index];
          auto [tit, fresh] = t.try_emplace(it->second, std::pair<std::size_t, std::size_t>{0, seen[r.question_index]});
          ++tit->second.first;
          ++seen[r.question_index];
        }
      block.width = block.categories.size();
      std::vector<std::vector<double>> cols(block.width, std::vector<double>(train.num_questions, 0.0));
      for (std::size_t q = 0; q < train.num_questions; ++q) {
        if (tallies[q].empty()) continue;
        std::size_t best = 0, best_count = 0, best_first = SIZE_MAX;
        for (const auto& [cat, cf] : tallies[q]) {
          if (cf.first > best_count || (cf.first == best_count && cf.second < best_first)) {
            best = cat;
            best_count = cf.first;
            best_first = cf.second;
          }
        }
        cols[best][q] = 1.0;
      }
      for (auto& c : cols) columns.push_back(std::move(c));
    }
    offset += block.width;
    out.layout.push_back(std::move(block));
  }

  out.values = Matrix(train.num_questions, offset);
  for (std::size_t j = 0; j < columns.size(); ++j)
    for (std::size_t q = 0; q < train.num_questions; ++q) out.values(q, j) = columns[j][q];
  return out;
}

}  // namespace pebg
