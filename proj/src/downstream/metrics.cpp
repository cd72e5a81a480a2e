#include "uer/downstream/metrics.hpp"

#include <algorithm>
#include <optional>

#include "uer/error.hpp"

namespace uer::downstream {

bool valid_bio_tag(std::string_view tag) {
  if (tag == "O") return true;
  return tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-';
}

std::vector<Entity> bio_entities(std::span<const std::string> tags) {
  std::vector<Entity> out;
  std::optional<Entity> open;
  auto close = [&](std::size_t at) {
    if (!open) return;
    open->end = at;
    out.push_back(*open);
    open.reset();
  };
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string& t = tags[i];
    if (!valid_bio_tag(t)) throw DataError("malformed BIO tag '" + t + "'");
    if (t == "O") {
      close(i);
      continue;
    }
    const std::string type = t.substr(2);
    if (t[0] == 'I' && open && open->type == type) continue;
    close(i);
    open = Entity{type, i, i};
  }
  close(tags.size());
  return out;
}

EntityScore entity_score(std::span<const std::vector<std::string>> gold,
                         std::span<const std::vector<std::string>> predicted) {
  if (gold.size() != predicted.size()) throw ContractError("gold and predicted sentence counts differ");
  EntityScore s;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].size() != predicted[i].size()) throw ContractError("sentence " + std::to_string(i) + " lengths differ");
    auto g = bio_entities(gold[i]);
    auto p = bio_entities(predicted[i]);
    std::sort(g.begin(), g.end());
    std::sort(p.begin(), p.end());
    std::vector<Entity> both;
    std::set_intersection(g.begin(), g.end(), p.begin(), p.end(), std::back_inserter(both));
    s.gold += g.size();
    s.predicted += p.size();
    s.correct += both.size();
  }
  s.precision = s.predicted ? static_cast<double>(s.correct) / s.predicted : 0.0;
  s.recall = s.gold ? static_cast<double>(s.correct) / s.gold : 0.0;
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

}  // namespace uer::downstream
