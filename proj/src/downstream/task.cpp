#include "uer/downstream/task.hpp"

#include <algorithm>
#include <set>

#include "uer/downstream/metrics.hpp"
#include "uer/error.hpp"

namespace uer::downstream {

namespace {

bool blank(const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; }

std::string at_line(std::size_t i) { return "line " + std::to_string(i + 1) + ": "; }

struct TaggedLine {
  std::string token;
  std::string tag;
};

TaggedLine parse_tagged(const std::string& raw, std::size_t i) {
  std::string line = raw;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto tab = line.find('\t');
  if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
    throw DataError(at_line(i) + "expected <token>\\t<tag>");
  }
  TaggedLine t{line.substr(0, tab), line.substr(tab + 1)};
  if (t.token.empty()) throw DataError(at_line(i) + "empty token");
  if (!valid_bio_tag(t.tag)) throw DataError(at_line(i) + "malformed BIO tag '" + t.tag + "'");
  return t;
}

}  // namespace

TaskKind parse_task_kind(std::string_view name) {
  if (name == "classify") return TaskKind::kClassify;
  if (name == "pair") return TaskKind::kPair;
  if (name == "ner") return TaskKind::kNer;
  throw ConfigError("unknown task '" + std::string(name) + "' (expected classify, pair or ner)");
}

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kClassify: return "classify";
    case TaskKind::kPair: return "pair";
    case TaskKind::kNer: return "ner";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "full") return Strategy::kFull;
  if (name == "feature") return Strategy::kFeature;
  throw ConfigError("unknown strategy '" + std::string(name) + "' (expected full or feature)");
}

std::string_view to_string(Strategy strategy) { return strategy == Strategy::kFull ? "full" : "feature"; }

std::vector<std::string> infer_labels(TaskKind kind, std::span<const std::string> lines, std::size_t classes) {
  std::vector<std::string> labels;
  if (kind == TaskKind::kNer) {
    std::set<std::string> tags;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (!blank(lines[i])) tags.insert(parse_tagged(lines[i], i).tag);
    }
    tags.erase("O");
    labels.push_back("O");
    labels.insert(labels.end(), tags.begin(), tags.end());
    return labels;
  }
  std::size_t n = classes;
  if (n == 0) {
    int largest = 1;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (blank(lines[i])) continue;
      const auto p = text::parse_labeled_line(lines[i], i + 1, kind == TaskKind::kPair);
      if (p.label < 0) throw DataError(at_line(i) + "negative label " + std::to_string(p.label));
      largest = std::max(largest, p.label);
    }
    n = static_cast<std::size_t>(largest) + 1;
  }
  for (std::size_t c = 0; c < n; ++c) labels.push_back(std::to_string(c));
  return labels;
}

Dataset read_dataset(TaskKind kind, std::span<const std::string> lines, const text::Vocabulary& vocab,
                     text::TokenizeMode mode, std::size_t max_length, const std::vector<std::string>& labels) {
  Dataset data;
  data.kind = kind;
  if (kind == TaskKind::kNer) {
    std::vector<std::string> tokens;
    std::vector<int> tags;
    auto flush = [&] {
      if (tokens.empty()) return;
      const std::size_t keep = std::min(tokens.size(), max_length - 2);
      if (keep < tokens.size()) ++data.truncated;
      text::Example ex = text::make_single(vocab.encode(std::span(tokens).first(keep)), max_length);
      ex.tag_labels.assign(ex.tokens.size(), kIgnoreId);
      for (std::size_t i = 0; i < keep; ++i) ex.tag_labels[i + 1] = tags[i];
      data.rows.push_back(std::move(ex));
      tokens.clear();
      tags.clear();
    };
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (blank(lines[i])) {
        flush();
        continue;
      }
      const auto t = parse_tagged(lines[i], i);
      const auto it = std::find(labels.begin(), labels.end(), t.tag);
      if (it == labels.end()) throw DataError(at_line(i) + "tag '" + t.tag + "' is not among the task's labels");
      tokens.push_back(t.token);
      tags.push_back(static_cast<int>(it - labels.begin()));
    }
    flush();
    return data;
  }

  const bool pair = kind == TaskKind::kPair;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (blank(lines[i])) continue;
    const auto p = text::parse_labeled_line(lines[i], i + 1, pair);
    if (p.label < 0 || static_cast<std::size_t>(p.label) >= labels.size()) {
      throw DataError(at_line(i) + "label " + std::to_string(p.label) + " outside the task's " +
                      std::to_string(labels.size()) + " classes");
    }
    const auto a = vocab.encode(text::tokenize(p.text, mode));
    text::Example ex;
    if (pair) {
      const auto b = vocab.encode(text::tokenize(p.text_b, mode));
      if (a.size() + b.size() + 3 > max_length) ++data.truncated;
      ex = text::make_pair(a, b, max_length);
    } else {
      if (a.size() + 2 > max_length) ++data.truncated;
      ex = text::make_single(a, max_length);
    }
    ex.class_label = p.label;
    data.rows.push_back(std::move(ex));
  }
  return data;
}

pipeline::ModelSpec task_spec(pipeline::ModelSpec base, TaskKind kind, const std::vector<std::string>& labels) {
  targets::TargetSpec t;
  t.entries = {{kind == TaskKind::kNer ? targets::TargetKind::kTag : targets::TargetKind::kCls, 1.0}};
  t.classes = labels.size();
  base.targets = t;
  base.task = std::string(to_string(kind));
  base.labels = labels;
  return base;
}

}  // namespace uer::downstream
