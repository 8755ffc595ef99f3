#include "patternbench/analysis.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <queue>
#include <stdexcept>
#include <unordered_map>

namespace patternbench {

BudgetExceeded::BudgetExceeded(std::size_t lower, std::size_t upper, std::size_t explored)
    : Error("state budget exceeded after " + std::to_string(explored) + " states (distance in [" +
            std::to_string(lower) + ", " + std::to_string(upper) + "])"),
      lower_(lower), upper_(upper), explored_(explored) {}

namespace {

// Label multiset over the target's labels.
using Bag = std::vector<std::uint8_t>;

bool within(const Bag& a, const Bag& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > b[i]) return false;
    }
    return true;
}

// Content of a gateway: one bag per child.
struct Gateway {
    NodeKind kind;
    std::vector<Bag> parts;
};

using LabelIndex = std::map<std::string, std::size_t>;

// Features of a model that moves other than Delete Fragment can only grow.
// Labels are ids from the target's LabelIndex; labels outside it get ids
// past the index.
struct Profile {
    std::size_t labels = 0;
    // By id, foreign ids included.
    std::vector<int> counts;
    StructureCounts structure;
    std::map<std::string, int> branch_values;
    std::map<Condition, int> loop_values;
    struct Ancestors {
        int loops = 0;
        int conditionals = 0;
        int parallels = 0;
    };
    // Indexed labels that occur exactly once.
    std::vector<std::optional<Ancestors>> unique;
    // Per indexed label: ancestor counts of every occurrence, sorted descending.
    std::vector<std::array<std::vector<int>, 3>> ancestors;
    // Unique labels a < b at a * labels + b: -1 none, 0 parallel,
    // 1 conditional, 2 a before b, 3 b before a.
    std::vector<std::int8_t> relation;
    // Same codes over all occurrence pairs at (a * labels + b) * 4 + code
    // (order folded for equal labels).
    std::vector<int> relation_counts;
    // Empty when some label lies outside the index.
    std::vector<Gateway> gateways;
    bool foreign = false;

    int count(std::size_t id) const { return id < counts.size() ? counts[id] : 0; }
};

Profile profile_of(const Node& root, const LabelIndex& index) {
    const std::size_t n_labels = index.size();
    Profile p;
    p.labels = n_labels;
    p.counts.assign(n_labels, 0);
    p.unique.assign(n_labels, std::nullopt);
    p.ancestors.assign(n_labels, {});
    p.relation.assign(n_labels * n_labels, -1);
    p.relation_counts.assign(n_labels * n_labels * 4, 0);
    p.structure = count_structure(root);
    std::map<std::string, std::size_t> foreign_ids;
    auto id_of = [&](const std::string& label) {
        auto it = index.find(label);
        if (it != index.end()) return it->second;
        p.foreign = true;
        auto [f, fresh] = foreign_ids.try_emplace(label, n_labels + foreign_ids.size());
        if (fresh) p.counts.push_back(0);
        return f->second;
    };
    using Chain = std::vector<std::pair<const Node*, std::size_t>>;
    Chain stack;
    std::vector<std::pair<std::size_t, Chain>> occurrences;

    std::function<Bag(const Node&)> walk = [&](const Node& n) -> Bag {
        Bag bag(n_labels, 0);
        if (n.kind == NodeKind::Activity) {
            const std::size_t id = id_of(n.label);
            ++p.counts[id];
            occurrences.emplace_back(id, stack);
            if (id < n_labels) ++bag[id];
            return bag;
        }
        Gateway gw{n.kind, {}};
        for (std::size_t i = 0; i < n.children.size(); ++i) {
            const Node& c = n.children[i];
            if (n.kind == NodeKind::Conditional && c.condition) ++p.branch_values[*c.condition];
            if (n.kind == NodeKind::Loop) ++p.loop_values[c.condition];
            stack.emplace_back(&n, i);
            Bag part = walk(c);
            stack.pop_back();
            for (std::size_t k = 0; k < bag.size(); ++k) bag[k] += part[k];
            gw.parts.push_back(std::move(part));
        }
        if (n.kind == NodeKind::Conditional || n.kind == NodeKind::Loop || n.kind == NodeKind::Parallel) {
            p.gateways.push_back(std::move(gw));
        }
        return bag;
    };
    walk(root);
    if (p.foreign) p.gateways.clear();

    for (const auto& [id, chain] : occurrences) {
        if (id >= n_labels) continue;
        Profile::Ancestors a;
        for (const auto& [node, _] : chain) {
            if (node->kind == NodeKind::Loop) ++a.loops;
            if (node->kind == NodeKind::Conditional) ++a.conditionals;
            if (node->kind == NodeKind::Parallel) ++a.parallels;
        }
        auto& lists = p.ancestors[id];
        lists[0].push_back(a.loops);
        lists[1].push_back(a.conditionals);
        lists[2].push_back(a.parallels);
        if (p.counts[id] == 1) p.unique[id] = a;
    }
    for (auto& lists : p.ancestors) {
        for (auto& l : lists) std::sort(l.rbegin(), l.rend());
    }
    // Pairs with a foreign label already force a delete.
    for (std::size_t i = 0; i < occurrences.size(); ++i) {
        for (std::size_t j = i + 1; j < occurrences.size(); ++j) {
            std::size_t la = occurrences[i].first;
            std::size_t lb = occurrences[j].first;
            if (la >= n_labels || lb >= n_labels) continue;
            const auto& x = occurrences[i].second;
            const auto& y = occurrences[j].second;
            std::size_t k = 0;
            while (k < x.size() && k < y.size() && x[k] == y[k]) ++k;
            // Distinct activities always diverge below a common block.
            const Node* lca = x[k].first;
            int rel = 0;
            if (lca->kind == NodeKind::Conditional) {
                rel = 1;
            } else if (lca->kind == NodeKind::Sequence) {
                rel = x[k].second < y[k].second ? 2 : 3;
            }
            if (lb < la) {
                std::swap(la, lb);
                if (rel >= 2) rel = 5 - rel;
            }
            if (la == lb && rel == 3) rel = 2;
            ++p.relation_counts[(la * n_labels + lb) * 4 + rel];
            if (p.counts[la] == 1 && p.counts[lb] == 1) p.relation[la * n_labels + lb] = static_cast<std::int8_t>(rel);
        }
    }
    return p;
}

// Injective child assignment with containment.
bool fits(const std::vector<Bag>& small, const std::vector<Bag>& large, std::vector<bool>& used, std::size_t i = 0) {
    if (i == small.size()) return true;
    for (std::size_t j = 0; j < large.size(); ++j) {
        if (used[j] || !within(small[i], large[j])) continue;
        used[j] = true;
        const bool ok = fits(small, large, used, i + 1);
        used[j] = false;
        if (ok) return true;
    }
    return false;
}

bool gateway_fits(const Gateway& g, const std::vector<Gateway>& targets) {
    for (const auto& t : targets) {
        if (t.kind != g.kind || t.parts.size() < g.parts.size()) continue;
        if (g.kind != NodeKind::Parallel && t.parts.size() != g.parts.size()) continue;
        std::vector<bool> used(t.parts.size(), false);
        if (fits(g.parts, t.parts, used)) return true;
    }
    return false;
}

struct Estimate {
    std::size_t h = 0;
    // Every path to the target contains a Delete Fragment.
    bool needs_delete = false;
};

template <class K>
std::size_t value_deficit(const std::map<K, int>& have, const std::map<K, int>& want) {
    std::size_t d = 0;
    for (const auto& [v, n] : want) {
        auto it = have.find(v);
        const int h = it == have.end() ? 0 : it->second;
        if (h < n) d += static_cast<std::size_t>(n - h);
    }
    return d;
}

// Fewest deletes (plus reinsertions of still-needed activities they take
// along) that remove every foreign activity and touch every gateway that
// cannot grow into one of the target's. Later subtrees only ever hold the
// activities of some subtree of `root`, so covering by subtrees is exact
// enough to stay a lower bound.
std::size_t deletion_cost(const Node& root, const Profile& s, const Profile& t, const LabelIndex& index) {
    struct Result {
        Bag bag;
        std::size_t useful = 0;
        std::size_t cost = 0;
    };
    std::function<Result(const Node&)> walk = [&](const Node& n) -> Result {
        Result r{Bag(index.size(), 0), 0, 0};
        if (n.kind == NodeKind::Activity) {
            auto it = index.find(n.label);
            if (it == index.end()) {
                r.cost = 1;
                return r;
            }
            ++r.bag[it->second];
            if (s.counts[it->second] <= t.counts[it->second]) r.useful = 1;
            return r;
        }
        Gateway gw{n.kind, {}};
        std::size_t below = 0;
        for (const auto& c : n.children) {
            Result sub = walk(c);
            for (std::size_t k = 0; k < r.bag.size(); ++k) r.bag[k] += sub.bag[k];
            r.useful += sub.useful;
            below += sub.cost;
            gw.parts.push_back(std::move(sub.bag));
        }
        // A parallel block can also vanish by flattening after a delete
        // elsewhere, so only conditionals and loops count here.
        const bool gateway = n.kind == NodeKind::Conditional || n.kind == NodeKind::Loop;
        if (gateway && !gateway_fits(gw, t.gateways)) below = std::max<std::size_t>(below, 1);
        r.cost = below == 0 ? 0 : std::min(below, 1 + r.useful);
        return r;
    };
    return walk(root).cost;
}

Estimate estimate(const Profile& s, const Profile& t, std::size_t deletions = 0) {
    Estimate e;
    const std::size_t n_labels = t.labels;
    for (std::size_t id = 0; id < n_labels; ++id) {
        if (s.counts[id] < t.counts[id]) e.h += static_cast<std::size_t>(t.counts[id] - s.counts[id]);
    }
    for (std::size_t id = 0; id < s.counts.size(); ++id) {
        if (s.counts[id] > t.count(id)) e.needs_delete = true;
    }
    if (s.structure.conditionals > t.structure.conditionals || s.structure.loops > t.structure.loops ||
        s.structure.parallels > t.structure.parallels) {
        e.needs_delete = true;
    }
    // Each Embed in Conditional adds one conditional; each Embed in Loop or
    // Update Condition adds at most one loop-condition value or one set
    // branch condition.
    e.h += t.structure.conditionals > s.structure.conditionals ? t.structure.conditionals - s.structure.conditionals
                                                               : 0;
    e.h += value_deficit(s.loop_values, t.loop_values);
    e.h += value_deficit(s.branch_values, t.branch_values);

    for (std::size_t id = 0; id < n_labels && !e.needs_delete; ++id) {
        for (std::size_t k = 0; k < 3; ++k) {
            const auto& a = s.ancestors[id][k];
            const auto& b = t.ancestors[id][k];
            for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
                if (a[i] > b[i]) e.needs_delete = true;
            }
        }
    }
    for (std::size_t k = 0; k < s.relation_counts.size() && !e.needs_delete; ++k) {
        if (s.relation_counts[k] > t.relation_counts[k]) e.needs_delete = true;
    }
    if (!s.foreign && !e.needs_delete) {
        for (const auto& g : s.gateways) {
            if (!gateway_fits(g, t.gateways)) {
                e.needs_delete = true;
                break;
            }
        }
    }
    if (deletions > 0) e.needs_delete = true;
    if (!e.needs_delete) return e;

    // Activities that must be removed and inserted again.
    std::vector<bool> removed(n_labels, false);
    std::size_t n_removed = 0;
    for (std::size_t id = 0; id < n_labels; ++id) {
        if (s.unique[id] && t.unique[id] && s.unique[id]->loops > t.unique[id]->loops) {
            removed[id] = true;
            ++n_removed;
        }
    }
    std::size_t matching = 0;
    std::vector<bool> matched(n_labels, false);
    for (std::size_t a = 0; a < n_labels; ++a) {
        for (std::size_t b = a + 1; b < n_labels; ++b) {
            const auto rel = s.relation[a * n_labels + b];
            const auto want = t.relation[a * n_labels + b];
            if (rel < 0 || want < 0 || rel == want) continue;
            if (removed[a] || removed[b] || matched[a] || matched[b]) continue;
            matched[a] = matched[b] = true;
            ++matching;
        }
    }
    e.h += std::max(1 + n_removed + matching, deletions);
    return e;
}

LabelIndex index_labels(const Node& target) {
    LabelIndex index;
    for (const auto& l : activities(target)) index.emplace(l, index.size());
    return index;
}

}  // namespace

std::size_t lower_bound(const ProcessModel& state, const ProcessModel& target) {
    ProcessModel s = state, t = target;
    s.normalize();
    t.normalize();
    const LabelIndex index = index_labels(t.root());
    const Profile sp = profile_of(s.root(), index), tp = profile_of(t.root(), index);
    return estimate(sp, tp, deletion_cost(s.root(), sp, tp, index)).h;
}


namespace {

struct Pred {
    std::uint32_t from;
    std::uint32_t move;  // index into the enumeration of `from`
};

struct StateInfo {
    const std::string* key = nullptr;
    std::uint32_t g = 0;
    std::uint32_t h = 0;
    std::uint32_t expanded_g = std::numeric_limits<std::uint32_t>::max();
    std::vector<Pred> preds;
};

class Search {
public:
    Search(const ProcessModel& source, const ProcessModel& target, Vocabulary vocab, const SearchOptions& opts)
        : vocab_(std::move(vocab)), opts_(opts) {
        labels_ = index_labels(target.root());
        target_profile_ = profile_of(target.root(), labels_);
        target_key_ = canonical_key(target);
        add(canonical_key(source), source, 0, std::nullopt);
    }

    /// Runs until the goal is popped; with `complete`, keeps expanding every
    /// state that can still lie on an optimal path.
    std::optional<std::size_t> run(bool complete, bool prune_deletes) {
        prune_deletes_ = prune_deletes;
        std::optional<std::size_t> best;
        while (!open_.empty()) {
            auto [f, h, order, idx] = open_.top();
            if (best && (!complete || f > *best)) break;
            open_.pop();
            auto& info = states_[idx];
            if (info.expanded_g <= info.g || f != info.g + info.h) continue;
            if (*info.key == target_key_) {
                if (!best) best = info.g;
                best_ = best;
                upper_ = std::min<std::size_t>(upper_, info.g);
                info.expanded_g = info.g;
                goal_ = idx;
                continue;
            }
            expand(idx);
        }
        return best;
    }

    std::optional<std::size_t> best() const { return best_; }
    /// States whose estimate exceeds `bound` are dropped.
    void set_upper_bound(std::size_t bound) { upper_ = bound; }
    std::size_t explored() const { return states_.size(); }
    std::size_t goal() const { return goal_; }
    const StateInfo& state(std::size_t i) const { return states_[i]; }

    std::size_t open_lower_bound() const {
        return open_.empty() ? 0 : std::get<0>(open_.top());
    }

    std::vector<PatternInstance> moves_of(std::size_t idx) const {
        return applicable_patterns(model_from_canonical_key(*states_[idx].key), vocab_);
    }

private:
    // Ties on (f, h) go to the most recently pushed state.
    using Entry = std::tuple<std::uint32_t, std::uint32_t, std::uint64_t, std::uint32_t>;

    void push(std::uint32_t f, std::uint32_t h, std::uint32_t idx) {
        open_.emplace(f, h, std::numeric_limits<std::uint64_t>::max() - pushes_++, idx);
    }

    void add(const std::string& key, const ProcessModel& model, std::uint32_t g, std::optional<Pred> pred) {
        auto [it, fresh] = index_.try_emplace(key, static_cast<std::uint32_t>(states_.size()));
        if (fresh) {
            if (states_.size() >= opts_.state_budget) {
                index_.erase(it);
                throw BudgetExceeded(open_lower_bound(), 0, states_.size());
            }
            const Profile p = profile_of(model.root(), labels_);
            const Estimate e = estimate(p, target_profile_, deletion_cost(model.root(), p, target_profile_, labels_));
            if ((prune_deletes_ && e.needs_delete) || g + e.h > upper_) {
                index_.erase(it);
                return;
            }
            StateInfo info;
            info.key = &it->first;
            info.g = g;
            info.h = static_cast<std::uint32_t>(e.h);
            if (pred) info.preds.push_back(*pred);
            states_.push_back(std::move(info));
            push(g + info.h, info.h, it->second);
            return;
        }
        auto& info = states_[it->second];
        if (g < info.g) {
            if (g + info.h > upper_) return;
            info.g = g;
            info.preds.clear();
            if (pred) info.preds.push_back(*pred);
            push(g + info.h, info.h, it->second);
        } else if (g == info.g && pred) {
            info.preds.push_back(*pred);
        }
    }

    void expand(std::uint32_t idx) {
        states_[idx].expanded_g = states_[idx].g;
        const std::uint32_t g = states_[idx].g + 1;
        const ProcessModel model = model_from_canonical_key(*states_[idx].key);
        const auto moves = applicable_patterns(model, vocab_);
        for (std::size_t m = 0; m < moves.size(); ++m) {
            ProcessModel child;
            try {
                child = apply_pattern(model, moves[m]);
            } catch (const PatternError&) {
                continue;
            }
            add(canonical_key(child), child, g, Pred{idx, static_cast<std::uint32_t>(m)});
        }
    }

    Vocabulary vocab_;
    SearchOptions opts_;
    LabelIndex labels_;
    Profile target_profile_;
    std::string target_key_;
    bool prune_deletes_ = false;
    std::unordered_map<std::string, std::uint32_t> index_;
    std::vector<StateInfo> states_;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> open_;
    std::size_t goal_ = 0;
    std::optional<std::size_t> best_;
    std::size_t upper_ = std::numeric_limits<std::size_t>::max();
    std::uint64_t pushes_ = 0;
};

ProcessModel normalized(const ProcessModel& m) {
    ProcessModel out = m;
    out.validate(true);
    out.normalize();
    return out;
}

Vocabulary search_vocabulary(const ProcessModel& target, const std::set<std::string>& alphabet, bool deletes) {
    Vocabulary v;
    std::set<std::string> labels;
    for (const auto& l : activities(target)) {
        if (!alphabet.empty() && !alphabet.count(l)) {
            throw Unreachable("target label '" + l + "' is not in the alphabet");
        }
        labels.insert(l);
    }
    v.labels = labels;
    const auto conds = conditions(target);
    v.conditions = std::set<std::string>(conds.begin(), conds.end());
    v.include_deletes = deletes;
    return v;
}

void require_constructible(const ProcessModel& target) {
    if (!is_pattern_constructible(target)) {
        throw Unreachable("target has a conditional with other than two branches");
    }
}

NodePath translate(const NodePath& path, const std::unordered_map<NodeId, NodeId>& back) {
    NodePath out;
    out.reserve(path.size());
    for (NodeId id : path) out.push_back(back.at(id));
    return out;
}

// Re-expresses an instance written against the canonical representative of
// `actual` in the ids of `actual`.
PatternInstance to_actual(const ProcessModel& actual, const PatternInstance& p) {
    const auto form = canonicalize(actual);
    std::unordered_map<NodeId, NodeId> back;
    for (const auto& [orig, canon] : form.id_map) back[canon] = orig;
    PatternInstance out = p;
    out.target = translate(p.target, back);
    out.position.node = translate(p.position.node, back);
    return out;
}

std::size_t trivial_upper_bound(const ProcessModel& source, const ProcessModel& target) {
    return (source.root().children.empty() ? 0 : 1) + build_from_empty(target).size();
}

}  // namespace

namespace {

bool valid_edge(const Search& s, std::size_t child, const Pred& p) {
    return s.state(p.from).g + 1 == s.state(child).g;
}

// Walks first predecessors back from the goal and re-expresses the moves
// against `start`.
std::vector<PatternInstance> first_path(const Search& s, const ProcessModel& start) {
    std::vector<std::pair<std::size_t, std::uint32_t>> rev;
    std::size_t cur = s.goal();
    while (s.state(cur).g > 0) {
        const auto& preds = s.state(cur).preds;
        auto it = std::find_if(preds.begin(), preds.end(), [&](const Pred& p) { return valid_edge(s, cur, p); });
        if (it == preds.end()) throw std::logic_error("broken predecessor chain");
        rev.emplace_back(it->from, it->move);
        cur = it->from;
    }
    std::vector<PatternInstance> path;
    ProcessModel model = start;
    for (auto it = rev.rbegin(); it != rev.rend(); ++it) {
        PatternInstance move = to_actual(model, s.moves_of(it->first)[it->second]);
        model = apply_pattern(model, move);
        path.push_back(std::move(move));
    }
    return path;
}

struct DagBuild {
    PathDag dag;
    std::uint64_t path_count = 0;
};

DagBuild build_dag(const Search& s) {
    const std::size_t goal = s.goal();
    std::unordered_map<std::size_t, std::size_t> local;
    std::vector<std::size_t> marked{goal};
    local[goal] = 0;
    for (std::size_t i = 0; i < marked.size(); ++i) {
        const std::size_t c = marked[i];
        for (const auto& p : s.state(c).preds) {
            if (!valid_edge(s, c, p) || local.count(p.from)) continue;
            local[p.from] = 0;
            marked.push_back(p.from);
        }
    }
    std::sort(marked.begin(), marked.end(), [&](std::size_t a, std::size_t b) {
        return std::make_pair(s.state(a).g, a) < std::make_pair(s.state(b).g, b);
    });
    DagBuild out;
    for (std::size_t i = 0; i < marked.size(); ++i) {
        local[marked[i]] = i;
        out.dag.states.push_back(*s.state(marked[i]).key);
        out.dag.depth.push_back(s.state(marked[i]).g);
    }
    out.dag.target = local[goal];

    struct Raw {
        std::size_t from, to;
        std::uint32_t move;
    };
    std::vector<Raw> raw;
    for (std::size_t c : marked) {
        for (const auto& p : s.state(c).preds) {
            if (valid_edge(s, c, p)) raw.push_back({local[p.from], local[c], p.move});
        }
    }
    std::sort(raw.begin(), raw.end(), [](const Raw& a, const Raw& b) {
        return std::tie(a.from, a.move, a.to) < std::tie(b.from, b.move, b.to);
    });
    raw.erase(std::unique(raw.begin(), raw.end(),
                          [](const Raw& a, const Raw& b) { return a.from == b.from && a.move == b.move; }),
              raw.end());
    std::vector<PatternInstance> moves;
    std::size_t loaded = static_cast<std::size_t>(-1);
    for (const auto& r : raw) {
        if (r.from != loaded) {
            moves = s.moves_of(marked[r.from]);
            loaded = r.from;
        }
        out.dag.edges.push_back({r.from, r.to, moves[r.move]});
    }

    std::vector<std::uint64_t> count(marked.size(), 0);
    count[out.dag.target] = 1;
    for (auto it = out.dag.edges.rbegin(); it != out.dag.edges.rend(); ++it) {
        // Edges are sorted by source, and sources are ordered by depth, so
        // every target's count is final before it is read.
        const std::uint64_t add = count[it->to];
        count[it->from] = add > std::numeric_limits<std::uint64_t>::max() - count[it->from]
                              ? std::numeric_limits<std::uint64_t>::max()
                              : count[it->from] + add;
    }
    out.path_count = count[0];
    return out;
}

}  // namespace

DistanceResult distance(const ProcessModel& source, const ProcessModel& target, const std::set<std::string>& alphabet,
                        const SearchOptions& opts) {
    const ProcessModel src = normalized(source);
    const ProcessModel tgt = normalized(target);
    require_constructible(tgt);
    Search search(src, tgt, search_vocabulary(tgt, alphabet, true), opts);
    search.set_upper_bound(trivial_upper_bound(src, tgt));
    DistanceResult result;
    try {
        search.run(opts.enumerate_limit > 0, false);
    } catch (const BudgetExceeded& e) {
        if (!search.best()) {
            throw BudgetExceeded(std::max<std::size_t>(e.lower(), search.state(0).h), trivial_upper_bound(src, tgt), e.explored());
        }
        // Distance is known; only the path set is incomplete.
        result.truncated = true;
    }
    if (!search.best()) throw Unreachable("search space exhausted without reaching the target");
    result.d = *search.best();
    result.explored_states = search.explored();
    if (opts.enumerate_limit == 0) {
        result.optimal_paths.push_back(first_path(search, src));
        result.path_count = 1;
        result.truncated = true;
        return result;
    }

    auto built = build_dag(search);
    result.dag = std::move(built.dag);
    result.path_count = built.path_count;
    optimal_paths(
        result, src,
        [&](const std::vector<PatternInstance>& path) {
            result.optimal_paths.push_back(path);
            return true;
        },
        opts.enumerate_limit);
    if (result.path_count > result.optimal_paths.size()) result.truncated = true;
    return result;
}

std::size_t optimal_paths(const DistanceResult& result, const ProcessModel& source,
                          const std::function<bool(const std::vector<PatternInstance>&)>& visit, std::size_t limit) {
    const PathDag& dag = result.dag;
    if (dag.states.empty() || limit == 0) return 0;
    const ProcessModel start = normalized(source);
    if (canonical_key(start) != dag.states[0]) throw Error("source does not match the distance result");
    std::vector<std::vector<const PathDag::Edge*>> out(dag.states.size());
    for (const auto& e : dag.edges) out[e.from].push_back(&e);

    std::size_t visited = 0;
    bool stop = false;
    std::vector<PatternInstance> path;
    std::function<void(std::size_t, const ProcessModel&)> dfs = [&](std::size_t state, const ProcessModel& model) {
        if (state == dag.target) {
            ++visited;
            if (!visit(path) || visited >= limit) stop = true;
            return;
        }
        for (const auto* e : out[state]) {
            PatternInstance move = to_actual(model, e->move);
            const ProcessModel next = apply_pattern(model, move);
            path.push_back(std::move(move));
            dfs(e->to, next);
            path.pop_back();
            if (stop) return;
        }
    };
    dfs(0, start);
    return visited;
}

DeadEndResult dead_end(const ProcessModel& state, const ProcessModel& target, const std::set<std::string>& alphabet,
                       const SearchOptions& opts) {
    const ProcessModel src = normalized(state);
    const ProcessModel tgt = normalized(target);
    const Vocabulary vocab = search_vocabulary(tgt, alphabet, false);
    DeadEndResult result;
    if (canonical_key(src) == canonical_key(tgt)) {
        result.witness.emplace();
        result.explored_states = 1;
        return result;
    }
    const LabelIndex index = index_labels(tgt.root());
    const Profile sp = profile_of(src.root(), index), tp = profile_of(tgt.root(), index);
    if (estimate(sp, tp, deletion_cost(src.root(), sp, tp, index)).needs_delete) {
        result.is_dead_end = true;
        result.explored_states = 1;
        return result;
    }
    Search search(src, tgt, vocab, opts);
    search.run(false, true);
    result.explored_states = search.explored();
    if (!search.best()) {
        result.is_dead_end = true;
        return result;
    }
    result.witness = first_path(search, src);
    return result;
}

namespace {

struct Shortest {
    std::size_t d = 0;
    std::vector<PatternInstance> path;
};

Shortest shortest(const ProcessModel& source, const ProcessModel& target, const std::set<std::string>& alphabet,
                  const SearchOptions& opts, bool with_path) {
    const ProcessModel src = normalized(source);
    const ProcessModel tgt = normalized(target);
    require_constructible(tgt);
    Search search(src, tgt, search_vocabulary(tgt, alphabet, true), opts);
    search.set_upper_bound(trivial_upper_bound(src, tgt));
    try {
        search.run(false, false);
    } catch (const BudgetExceeded& e) {
        throw BudgetExceeded(std::max<std::size_t>(e.lower(), search.state(0).h), trivial_upper_bound(src, tgt),
                             e.explored());
    }
    if (!search.best()) throw Unreachable("search space exhausted without reaching the target");
    Shortest out;
    out.d = *search.best();
    if (with_path) out.path = first_path(search, src);
    return out;
}

// Distances keyed by canonical key, shared across one analysis.
class DistanceCache {
public:
    explicit DistanceCache(const SearchOptions& opts) : opts_(opts) {}

    std::size_t operator()(const ProcessModel& from, const ProcessModel& to) {
        auto key = std::make_pair(canonical_key(from), canonical_key(to));
        if (auto it = memo_.find(key); it != memo_.end()) return it->second;
        const std::size_t d = key.first == key.second ? 0 : shortest(from, to, {}, opts_, false).d;
        memo_.emplace(std::move(key), d);
        return d;
    }

private:
    SearchOptions opts_;
    std::map<std::pair<std::string, std::string>, std::size_t> memo_;
};

}  // namespace

const char* to_string(CountingMode mode) {
    return mode == CountingMode::StateChangingOnly ? "STATE_CHANGING_ONLY" : "INCLUDE_FAILED";
}

const char* to_string(StepMarker marker) {
    switch (marker) {
    case StepMarker::OnOptimalPath: return "ON_OPTIMAL_PATH";
    case StepMarker::Detour: return "DETOUR";
    case StepMarker::FailedTrial: return "FAILED_TRIAL";
    case StepMarker::Reverted: return "REVERTED";
    }
    return "?";
}

std::optional<CountingMode> counting_mode_from_string(const std::string& text) {
    if (text == "STATE_CHANGING_ONLY") return CountingMode::StateChangingOnly;
    if (text == "INCLUDE_FAILED") return CountingMode::IncludeFailed;
    return std::nullopt;
}

std::vector<std::string> touched_labels(const ProcessModel& model, const PatternInstance& p) {
    std::set<std::string> out;
    switch (p.kind) {
    case PatternKind::SerialInsert:
    case PatternKind::ParallelInsert: out.insert(p.label); break;
    default:
        if (const Node* n = model.resolve(p.target)) {
            for (auto& l : activities(*n)) out.insert(std::move(l));
        }
    }
    return {out.begin(), out.end()};
}

ProcessDeviations process_deviations(const SessionLog& log, const ProcessModel& solution, CountingMode mode,
                                     const SearchOptions& opts) {
    (void)solution;  // deviations are measured against what was built
    const auto states = replay_states(log);
    const auto pairs = undo_pairs(log);
    std::set<std::size_t> reverted;
    for (const auto& p : pairs) {
        if (p) reverted.insert(*p);
    }
    const ProcessModel& final_model = states.back();
    DistanceCache dist(opts);
    const ProcessModel empty = new_empty();

    ProcessDeviations out;
    out.optimal_operations = dist(empty, final_model);
    std::vector<std::size_t> effective;  // indices into out.steps
    for (std::size_t i = 0; i < log.events.size(); ++i) {
        const auto& e = log.events[i];
        if (e.action.type != ActionType::Apply) continue;
        StepReport step;
        step.event = i;
        step.touched = touched_labels(states[i], e.action.pattern);
        if (!e.ok()) {
            step.marker = StepMarker::FailedTrial;
            ++out.failed_trials;
        } else if (reverted.count(i)) {
            step.marker = StepMarker::Reverted;
            ++out.reverted_applies;
        } else {
            step.marker = StepMarker::Detour;
            effective.push_back(out.steps.size());
        }
        out.steps.push_back(std::move(step));
    }
    out.counted_operations = effective.size() + (mode == CountingMode::IncludeFailed ? out.failed_trials : 0);

    // Longest chain of geodesic steps climbing one level at a time, latest
    // steps preferred on ties.
    const std::size_t D = out.optimal_operations;
    const std::size_t n = effective.size();
    std::vector<std::size_t> level(n), before_remaining(n), after_remaining(n);
    std::vector<bool> geodesic(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t ev = out.steps[effective[k]].event;
        const ProcessModel& b = states[ev];
        const ProcessModel& a = states[ev + 1];
        before_remaining[k] = dist(b, final_model);
        after_remaining[k] = dist(a, final_model);
        const std::size_t b0 = dist(empty, b);
        level[k] = b0;
        // The triangle inequality then puts `a` one level above `b`.
        geodesic[k] = b0 + before_remaining[k] == D && after_remaining[k] + 1 == before_remaining[k];
    }
    std::vector<std::size_t> best(n, 0), prev(n, n);
    std::size_t end = n;
    for (std::size_t k = 0; k < n; ++k) {
        if (!geodesic[k]) continue;
        best[k] = 1;
        for (std::size_t j = 0; j < k; ++j) {
            if (geodesic[j] && level[j] + 1 == level[k] && best[j] + 1 >= best[k]) {
                best[k] = best[j] + 1;
                prev[k] = j;
            }
        }
        if (end == n || best[k] >= best[end]) end = k;
    }
    std::vector<bool> on(n, false);
    std::size_t on_count = 0;
    for (std::size_t k = end; k < n; k = prev[k]) {
        on[k] = true;
        ++on_count;
    }
    for (std::size_t k = n; k-- > 0 && on_count < D;) {
        if (!on[k] && after_remaining[k] + 1 == before_remaining[k]) {
            on[k] = true;
            ++on_count;
        }
    }
    for (std::size_t k = 0; k < n; ++k) {
        if (on[k]) out.steps[effective[k]].marker = StepMarker::OnOptimalPath;
    }
    for (const auto& step : out.steps) {
        if (step.marker == StepMarker::Detour ||
            (step.marker == StepMarker::FailedTrial && mode == CountingMode::IncludeFailed)) {
            ++out.count;
        }
    }
    return out;
}

ProductDeviations product_deviations(const ProcessModel& final_model, const ProcessModel& solution,
                                     const std::set<std::string>& alphabet, const SearchOptions& opts) {
    ProductDeviations out;
    auto s = shortest(final_model, solution, alphabet, opts, true);
    out.count = s.d;
    out.witness = std::move(s.path);
    ProcessModel model = normalized(final_model);
    for (const auto& p : out.witness) {
        out.touched.push_back(touched_labels(model, p));
        model = apply_pattern(model, p);
    }
    return out;
}

std::string attribute_region(const std::vector<std::string>& labels, const ProcessModel& solution,
                             const RegionMap& regions) {
    std::string best = kNoRegion;
    std::tuple<std::size_t, std::size_t, std::string> best_rank;
    const std::set<std::string> wanted(labels.begin(), labels.end());
    for (const auto& [id, path] : regions) {
        const Node* n = solution.resolve(path);
        if (!n) throw Error("region '" + id + "' does not resolve in the solution model");
        const auto acts = activities(*n);
        const bool meets = std::any_of(acts.begin(), acts.end(), [&](const std::string& l) { return wanted.count(l); });
        if (!meets) continue;
        // Smaller first, then deeper, then by id.
        auto rank = std::make_tuple(acts.size(), std::numeric_limits<std::size_t>::max() - path.size(), id);
        if (best == kNoRegion || rank < best_rank) {
            best = id;
            best_rank = rank;
        }
    }
    return best;
}

DeviationReport map_to_regions(DeviationReport report, const ProcessModel& solution, const RegionMap& regions) {
    for (const auto& [id, path] : regions) {
        if (!solution.resolve(path)) throw Error("region '" + id + "' does not resolve in the solution model");
    }
    report.per_region.clear();
    for (auto& step : report.process.steps) {
        step.region = attribute_region(step.touched, solution, regions);
        const bool counted = step.marker == StepMarker::Detour ||
                             (step.marker == StepMarker::FailedTrial && report.mode == CountingMode::IncludeFailed);
        if (counted) ++report.per_region[step.region].process;
    }
    for (const auto& touched : report.product.touched) {
        ++report.per_region[attribute_region(touched, solution, regions)].product;
    }
    return report;
}

DeviationReport analyze_session(const SessionLog& log, const ProcessModel& solution, const RegionMap& regions,
                                const AnalysisOptions& opts) {
    DeviationReport report;
    report.session_id = log.session_id;
    report.task_id = log.task_id;
    report.mode = opts.mode;
    report.process = process_deviations(log, solution, opts.mode, opts.search);
    const auto states = replay_states(log);
    report.product = product_deviations(states.back(), solution, {}, opts.search);
    if (opts.check_dead_ends) {
        std::map<std::string, bool> memo;
        for (std::size_t k = 0; k < states.size(); ++k) {
            const std::string key = canonical_key(states[k]);
            auto it = memo.find(key);
            if (it == memo.end()) {
                it = memo.emplace(key, dead_end(states[k], solution, {}, opts.search).is_dead_end).first;
            }
            if (it->second) report.dead_end_steps.push_back(k);
        }
    }
    return map_to_regions(std::move(report), solution, regions);
}

json distance_to_json(const DistanceResult& result) {
    json doc;
    doc["d"] = result.d;
    doc["explored_states"] = result.explored_states;
    doc["truncated"] = result.truncated;
    doc["path_count"] = result.path_count;
    json paths = json::array();
    for (const auto& path : result.optimal_paths) {
        json p = json::array();
        for (const auto& step : path) p.push_back(pattern_to_json(step));
        paths.push_back(std::move(p));
    }
    doc["optimal_paths"] = std::move(paths);
    json states = json::array();
    for (std::size_t i = 0; i < result.dag.states.size(); ++i) {
        states.push_back({{"key", result.dag.states[i]}, {"depth", result.dag.depth[i]}});
    }
    json edges = json::array();
    for (const auto& e : result.dag.edges) {
        edges.push_back({{"from", e.from}, {"to", e.to}, {"pattern", pattern_to_json(e.move)}});
    }
    doc["dag"] = {{"states", std::move(states)}, {"edges", std::move(edges)}, {"target", result.dag.target}};
    return doc;
}

json dead_end_to_json(const DeadEndResult& result) {
    json doc;
    doc["is_dead_end"] = result.is_dead_end;
    if (result.witness) {
        json w = json::array();
        for (const auto& p : *result.witness) w.push_back(pattern_to_json(p));
        doc["witness"] = std::move(w);
    } else {
        doc["witness"] = nullptr;
    }
    doc["explored_states"] = result.explored_states;
    return doc;
}

json deviation_report_to_json(const DeviationReport& report) {
    json doc;
    doc["format"] = "patternbench-deviation-report";
    doc["version"] = 1;
    doc["session_id"] = report.session_id;
    doc["task_id"] = report.task_id;
    doc["mode"] = to_string(report.mode);
    doc["totals"] = {
        {"process_deviations", report.process.count},
        {"product_deviations", report.product.count},
        {"counted_operations", report.process.counted_operations},
        {"optimal_operations", report.process.optimal_operations},
        {"failed_trials", report.process.failed_trials},
        {"reverted_applies", report.process.reverted_applies},
        {"dead_ends", report.dead_end_steps.size()},
    };
    json steps = json::array();
    for (const auto& s : report.process.steps) {
        steps.push_back({{"event", s.event}, {"marker", to_string(s.marker)}, {"touched", s.touched}, {"region", s.region}});
    }
    doc["steps"] = std::move(steps);
    doc["dead_end_steps"] = report.dead_end_steps;
    json regions = json::object();
    for (const auto& [id, c] : report.per_region) regions[id] = {{"process", c.process}, {"product", c.product}};
    doc["per_region"] = std::move(regions);
    json witness = json::array();
    for (const auto& p : report.product.witness) witness.push_back(pattern_to_json(p));
    doc["product_witness"] = std::move(witness);
    json tags = json::object();
    for (const auto& [k, v] : report.reason_tags) tags[k] = v;
    doc["reason_tags"] = std::move(tags);
    return doc;
}

}  // namespace patternbench
