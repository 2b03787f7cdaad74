#include "comptag/fixture.hpp"

#include <cstdio>
#include <random>
#include <set>

#include "comptag/error.hpp"
#include "comptag/io.hpp"

namespace comptag::fixture {

using nlohmann::json;

CompetencyGraph ml101_graph() {
  std::vector<CompetencyNode> nodes{
      {"c1", "Algèbre linéaire", "Linear Algebra",
       "Vectors, matrices and linear maps.", {"linear algebra"}, {}},
      {"c2", "Probabilités", "Probability",
       "Random variables, distributions and expectation.", {}, {}},
      {"c3", "Apprentissage supervisé", "Supervised Learning",
       "Learning a function from labeled examples.", {"generalization error"}, {}},
      {"c4", "Régression linéaire", "Linear Regression",
       "Least-squares fitting of a linear model.", {}, {}},
      {"c5", "Classification", "Logistic Regression / Classification",
       "Predicting discrete labels, e.g. with logistic regression.",
       {"regularization", "multi-label classification"}, {}},
  };
  std::vector<CompetencyEdge> edges{
      {"c1", "c4", Relation::PrerequisiteOf},
      {"c2", "c3", Relation::PrerequisiteOf},
      {"c3", "c4", Relation::PrerequisiteOf},
      {"c3", "c5", Relation::PrerequisiteOf},
  };
  return CompetencyGraph(std::move(nodes), std::move(edges));
}

ResourcePredictions ml101_predictions() {
  auto pred = [](std::string fid, std::string cid, std::string evidence) {
    return TagPrediction{std::move(fid), std::move(cid), 0.8, 0, evidence.size(), evidence};
  };
  ResourcePredictions out;
  out["r1"]["r1::f0"] = {};
  out["r1"]["r1::f1"] = {pred("r1::f1", "c3", "learn a function from labeled examples")};
  out["r2"]["r2::f0"] = {};
  out["r2"]["r2::f1"] = {pred("r2::f1", "c3", "generalization error"),
                         pred("r2::f1", "c5", "regularization")};
  out["r3"]["r3::f0"] = {pred("r3::f0", "c3", "overfitting")};
  out["r3"]["r3::f1"] = {};
  out["r4"]["r4::f0"] = {pred("r4::f0", "c5", "multi-label classification")};
  return out;
}

namespace {

struct Seed {
  const char* id;
  const char* fr;
  const char* en;
  const char* description;
  std::vector<std::string> aliases;
};

// No folded label or alias is a substring of another competency's.
const std::vector<Seed>& seeds() {
  static const std::vector<Seed> s{
      {"C01", "Programmation", "Programming", "Écrire, tester et structurer des programmes.", {}},
      {"C02", "Structures de contrôle", "Control flow", "Conditions et boucles.", {"boucles itératives"}},
      {"C03", "Récursivité", "Recursion", "Fonctions qui s'appellent elles-mêmes.", {}},
      {"C04", "Algorithmique", "Algorithm design", "Concevoir des procédures de calcul.", {}},
      {"C05", "Complexité algorithmique", "Computational complexity",
       "Coût en temps et en mémoire.", {"notation grand O"}},
      {"C06", "Tri et recherche", "Sorting and searching", "Algorithmes de tri, recherche dichotomique.", {}},
      {"C07", "Théorie des graphes", "Graph theory", "Parcours, plus courts chemins.", {}},
      {"C08", "Bases de données relationnelles", "Relational databases",
       "Modèle relationnel et SGBD.", {}},
      {"C09", "Requêtes SQL", "SQL querying", "Sélection, jointure, agrégation.", {"langage SQL"}},
      {"C10", "Normalisation des données", "Data normalization", "Formes normales.", {}},
      {"C11", "Probabilités", "Probability", "Variables aléatoires et lois.", {}},
      {"C12", "Statistiques descriptives", "Descriptive statistics", "Moyenne, variance, quantiles.", {}},
      {"C13", "Algèbre linéaire", "Linear algebra", "Vecteurs, matrices, applications linéaires.", {}},
      {"C14", "Apprentissage supervisé", "Supervised learning",
       "Apprendre une fonction à partir d'exemples étiquetés.", {}},
      {"C15", "Régression linéaire", "Linear regression", "Ajustement aux moindres carrés.",
       {"moindres carrés"}},
      {"C16", "Régression logistique", "Logistic regression", "Classification binaire probabiliste.", {}},
      {"C17", "Partitionnement de données", "Data clustering", "K-moyennes, classification hiérarchique.", {}},
      {"C18", "Réseaux de neurones", "Neural networks", "Perceptrons multicouches.",
       {"apprentissage profond"}},
      {"C19", "Surapprentissage", "Overfitting", "Écart entre erreur d'entraînement et de test.",
       {"sur-ajustement"}},
      {"C20", "Réseaux informatiques", "Computer networking", "Protocoles et couches réseau.", {}},
      {"C21", "Sécurité informatique", "Information security", "Menaces, chiffrement, authentification.", {}},
      {"C22", "Gestion de versions", "Version control", "Historique, branches et fusions.", {}},
  };
  return s;
}

CompetencyGraph synthetic_graph() {
  std::vector<CompetencyNode> nodes;
  for (const auto& s : seeds()) {
    nodes.push_back({s.id, s.fr, std::string(s.en), s.description, s.aliases, {}});
  }
  std::vector<CompetencyEdge> edges{
      {"C02", "C01", Relation::BroaderNarrower},
      {"C03", "C01", Relation::BroaderNarrower},
      {"C05", "C04", Relation::BroaderNarrower},
      {"C06", "C04", Relation::BroaderNarrower},
      {"C09", "C08", Relation::PartOf},
      {"C10", "C08", Relation::PartOf},
      {"C15", "C14", Relation::BroaderNarrower},
      {"C16", "C14", Relation::BroaderNarrower},
      {"C19", "C14", Relation::PartOf},
      {"C01", "C04", Relation::PrerequisiteOf},
      {"C04", "C07", Relation::PrerequisiteOf},
      {"C11", "C12", Relation::PrerequisiteOf},
      {"C11", "C14", Relation::PrerequisiteOf},
      {"C13", "C15", Relation::PrerequisiteOf},
      {"C14", "C18", Relation::PrerequisiteOf},
      {"C14", "C17", Relation::PrerequisiteOf},
      {"C20", "C21", Relation::PrerequisiteOf},
      {"C01", "C22", Relation::PrerequisiteOf},
  };
  return CompetencyGraph(std::move(nodes), std::move(edges));
}

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  std::size_t below(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }
  std::size_t between(std::size_t lo, std::size_t hi) { return lo + below(hi - lo + 1); }

  std::string word() {
    static constexpr std::string_view kCons = "bdfgklmnprstvz";
    static constexpr std::string_view kVow = "aeiou";
    std::string w;
    const auto syllables = between(2, 3);
    for (std::size_t i = 0; i < syllables; ++i) {
      w += kCons[below(kCons.size())];
      w += kVow[below(kVow.size())];
    }
    return w;
  }

  std::string capitalized_words(std::size_t n) {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
      if (i) out += ' ';
      out += word();
    }
    out[0] = static_cast<char>(out[0] - 'a' + 'A');
    return out;
  }

  /// Paragraph of filler sentences with each phrase inserted once.
  std::string paragraph(const std::vector<std::string>& phrases) {
    std::vector<std::vector<std::string>> sentences(between(3, 5));
    for (auto& s : sentences) {
      const auto n = between(6, 14);
      for (std::size_t i = 0; i < n; ++i) s.push_back(word());
    }
    for (const auto& p : phrases) {
      auto& s = sentences[below(sentences.size())];
      s.insert(s.begin() + static_cast<std::ptrdiff_t>(1 + below(s.size())), p);
    }
    std::string out;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      if (i) out += ' ';
      sentences[i][0][0] = static_cast<char>(sentences[i][0][0] - 'a' + 'A');
      for (std::size_t j = 0; j < sentences[i].size(); ++j) {
        if (j) out += ' ';
        out += sentences[i][j];
      }
      out += '.';
    }
    return out;
  }

 private:
  std::mt19937_64 rng_;
};

IdSet draw_gold(Gen& gen, const CompetencyGraph& g, const std::vector<std::string>& ids) {
  const auto n = gen.between(1, 3);
  IdSet out;
  while (out.size() < n) {
    const auto& c = ids[gen.below(ids.size())];
    if (out.count(c)) continue;
    bool related = false;
    const auto up = g.ancestors(c);
    const auto down = g.descendants(c);
    for (const auto& o : out) related = related || up.count(o) || down.count(o);
    if (!related) out.insert(c);
  }
  return out;
}

IdSet mock_hits(const MockProvider& mock, const std::string& text,
                const std::vector<std::string>& ids) {
  IdSet out;
  for (const auto& h : mock.select(text, ids)) out.insert(h.at("competency_id").get<std::string>());
  return out;
}

}  // namespace

SyntheticDataset generate(const SyntheticOptions& opts) {
  if (opts.courses == 0 || opts.resources < opts.courses) {
    throw Error(ErrorCode::InvalidArgument, "need at least one resource per course");
  }
  SyntheticDataset ds{synthetic_graph(), {}, {}};
  const auto ids = ds.graph.ids();
  const MockProvider mock(ds.graph);
  Gen gen(opts.seed);
  static constexpr ResourceKind kKinds[] = {ResourceKind::Page, ResourceKind::PdfText,
                                            ResourceKind::Url, ResourceKind::Quiz,
                                            ResourceKind::Assignment};
  std::size_t extra_left = opts.extra_gold;

  for (std::size_t i = 0; i < opts.resources; ++i) {
    char rid[16];
    std::snprintf(rid, sizeof rid, "r%04zu", i + 1);
    const std::size_t course = i < opts.courses ? i : gen.below(opts.courses);
    char cid[16];
    std::snprintf(cid, sizeof cid, "UV%02zu", course + 1);
    const auto kind = kKinds[gen.below(std::size(kKinds))];
    const auto sections = gen.between(1, 2);
    const bool annotate_second = sections == 2 && extra_left > 0;
    if (annotate_second) --extra_left;

    // Regenerate until the mock sees exactly the inserted labels.
    for (int attempt = 0;; ++attempt) {
      if (attempt == 100) throw Error(ErrorCode::Internal, "fixture generation did not converge");
      std::vector<IdSet> gold(sections);
      gold[0] = draw_gold(gen, ds.graph, ids);
      if (annotate_second) gold[1] = draw_gold(gen, ds.graph, ids);

      std::string body;
      for (std::size_t s = 0; s < sections; ++s) {
        std::vector<std::string> phrases;
        for (const auto& c : gold[s]) {
          const auto& n = ds.graph.node(c);
          phrases.push_back(gen.below(2) == 0 ? n.label_fr : *n.label_en);
        }
        if (s) body += "\n\n";
        body += "## " + gen.capitalized_words(gen.between(2, 4)) + "\n" + gen.paragraph(phrases);
      }
      Resource r{rid, cid, kind, gen.capitalized_words(gen.between(2, 5)), std::nullopt, body};
      if (kind == ResourceKind::Url) {
        r.url = "https://lms.example.org/mod/url/view.php?id=" + std::to_string(1000 + i);
      }

      const auto frags = fragment_resource(r, FragmentConfig{});
      bool ok = frags.size() == sections;
      for (std::size_t s = 0; ok && s < sections; ++s) {
        ok = mock_hits(mock, frags[s].text, ids) == gold[s];
      }
      if (!ok) continue;

      for (std::size_t s = 0; s < sections; ++s) {
        if (gold[s].empty()) continue;
        ds.gold.push_back({frags[s].fragment_id, r.resource_id, r.course_id, gold[s]});
      }
      ds.resources.push_back(std::move(r));
      break;
    }
  }
  return ds;
}

void write_dataset(const SyntheticDataset& ds, const std::filesystem::path& dir,
                   std::uint64_t seed) {
  io::write_file(dir / "graph.json", ds.graph.to_json().dump(2) + "\n");
  std::vector<json> resources;
  for (const auto& r : ds.resources) resources.push_back(to_json(r));
  io::write_jsonl(dir / "resources.jsonl", resources);
  std::vector<json> gold;
  for (const auto& g : ds.gold) gold.push_back(to_json(g));
  io::write_jsonl(dir / "gold.jsonl", gold);
  const json config = {
      {"paths",
       {{"corpus", "resources.jsonl"}, {"graph", "graph.json"}, {"gold", "gold.jsonl"}, {"out", "run"}}},
      {"seed", seed}};
  io::write_file(dir / "config.json", config.dump(2) + "\n");
}

}  // namespace comptag::fixture
