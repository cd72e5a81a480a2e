#pragma once

#include <compare>
#include <span>
#include <string>
#include <vector>

namespace uer::downstream {

// Half-open token span [begin, end) of one typed entity.
struct Entity {
  std::string type;
  std::size_t begin = 0;
  std::size_t end = 0;
  auto operator<=>(const Entity&) const = default;
};

// BIO decoding, conlleval style: B-X opens an entity, I-X extends an open X
// entity and otherwise opens a new one, O closes. Tags must be O, B-X or I-X.
std::vector<Entity> bio_entities(std::span<const std::string> tags);
bool valid_bio_tag(std::string_view tag);

struct EntityScore {
  std::size_t gold = 0;
  std::size_t predicted = 0;
  std::size_t correct = 0;
  // Empty denominators give 0, never NaN.
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

// Exact-match entity scoring over sentences (type and span must agree).
EntityScore entity_score(std::span<const std::vector<std::string>> gold,
                         std::span<const std::vector<std::string>> predicted);

struct Metrics {
  std::size_t rows = 0;
  double accuracy = 0;  // classification; token accuracy for ner
  EntityScore entities;  // ner only
  bool tagging = false;
  // Model selection score: accuracy, or entity F1 for ner.
  double score() const { return tagging ? entities.f1 : accuracy; }
};

}  // namespace uer::downstream
