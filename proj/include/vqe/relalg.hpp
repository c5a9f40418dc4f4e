#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "vqe/frameql.hpp"
#include "vqe/trace.hpp"

namespace vqe::relalg {

using Value = std::variant<double, std::string>;

struct UdfDef {
    std::string name;
    // user-marked: the UDF returns meaningful results on the frame-level
    // content descriptor, so it can drive a frame filter
    bool frame_applicable = false;
    std::function<Value(const DetectionRecord&)> eval;
    std::function<double(const std::vector<double>&)> frame_eval;
};

inline double redness(const std::vector<double>& content) {
    if (content.empty()) throw std::invalid_argument("redness: empty descriptor");
    return content[0];
}

inline double box_area(const Box& b) { return b.area(); }

// Synthetic stand-in for a sub-classifier over box pixels.
inline std::string classify(const std::vector<double>& content) {
    if (content.size() < 2) return "unknown";
    return content[1] < 128.0 ? "sedan" : "suv";
}

class UdfRegistry {
  public:
    UdfRegistry() {
        add({"redness", true,
             [](const DetectionRecord& r) -> Value { return redness(r.content); },
             [](const std::vector<double>& d) { return redness(d); }});
        add({"area", false,
             [](const DetectionRecord& r) -> Value { return box_area(r.mask); },
             nullptr});
        add({"classify", false,
             [](const DetectionRecord& r) -> Value { return classify(r.content); },
             nullptr});
        add({"xmin", false, [](const DetectionRecord& r) -> Value { return r.mask.xmin; }, nullptr});
        add({"xmax", false, [](const DetectionRecord& r) -> Value { return r.mask.xmax; }, nullptr});
        add({"ymin", false, [](const DetectionRecord& r) -> Value { return r.mask.ymin; }, nullptr});
        add({"ymax", false, [](const DetectionRecord& r) -> Value { return r.mask.ymax; }, nullptr});
    }

    void add(UdfDef def) { udfs_[def.name] = std::move(def); }

    const UdfDef* find(const std::string& name) const {
        auto it = udfs_.find(name);
        return it == udfs_.end() ? nullptr : &it->second;
    }

    std::set<std::string> names() const {
        std::set<std::string> out;
        for (const auto& [k, v] : udfs_) out.insert(k);
        return out;
    }

  private:
    std::map<std::string, UdfDef> udfs_;
};

inline const UdfRegistry& default_registry() {
    static const UdfRegistry reg;
    return reg;
}

namespace detail {

inline Value eval_operand(const frameql::ExprPtr& e, const DetectionRecord& rec,
                          const UdfRegistry& udfs) {
    using frameql::Expr;
    switch (e->kind) {
        case Expr::Kind::NumberLit:
            return e->number;
        case Expr::Kind::StringLit:
            return e->str;
        case Expr::Kind::Column:
            if (e->name == "class") return rec.object_class;
            if (e->name == "timestamp") return static_cast<double>(rec.timestamp);
            if (e->name == "trackid")
                return static_cast<double>(rec.trackid.value_or(-1));
            throw std::invalid_argument("unknown column '" + e->name + "'");
        case Expr::Kind::Call: {
            const UdfDef* def = udfs.find(e->name);
            if (!def) throw std::invalid_argument("unknown UDF '" + e->name + "'");
            return def->eval(rec);
        }
        default:
            throw std::invalid_argument("boolean expression used as comparison operand");
    }
}

inline bool compare(const Value& a, const std::string& op, const Value& b) {
    auto cmp = [&](auto&& x, auto&& y) -> bool {
        if (op == "=") return x == y;
        if (op == "!=") return x != y;
        if (op == "<") return x < y;
        if (op == "<=") return x <= y;
        if (op == ">") return x > y;
        if (op == ">=") return x >= y;
        throw std::invalid_argument("unknown comparison operator " + op);
    };
    if (a.index() != b.index()) return op == "!=";  // mixed types only differ
    if (std::holds_alternative<double>(a))
        return cmp(std::get<double>(a), std::get<double>(b));
    return cmp(std::get<std::string>(a), std::get<std::string>(b));
}

}  // namespace detail

// Record-level WHERE evaluation.
inline bool matches(const frameql::ExprPtr& e, const DetectionRecord& rec,
                    const UdfRegistry& udfs = default_registry()) {
    using frameql::Expr;
    if (!e) return true;
    switch (e->kind) {
        case Expr::Kind::And:
            for (const auto& c : e->children)
                if (!matches(c, rec, udfs)) return false;
            return true;
        case Expr::Kind::Or:
            for (const auto& c : e->children)
                if (matches(c, rec, udfs)) return true;
            return false;
        case Expr::Kind::Compare:
            return detail::compare(detail::eval_operand(e->children[0], rec, udfs), e->op,
                                   detail::eval_operand(e->children[1], rec, udfs));
        default:
            throw std::invalid_argument("WHERE clause must be a boolean expression");
    }
}

inline std::vector<DetectionRecord> filter(const std::vector<DetectionRecord>& records,
                                           const frameql::ExprPtr& where,
                                           const UdfRegistry& udfs = default_registry()) {
    std::vector<DetectionRecord> out;
    for (const auto& r : records)
        if (matches(where, r, udfs)) out.push_back(r);
    return out;
}

inline bool compare_num(double a, const std::string& op, double b) {
    return detail::compare(Value{a}, op, Value{b});
}

// HAVING over one group of records.
inline bool having_holds(const std::vector<frameql::HavingTerm>& having,
                         const std::vector<DetectionRecord>& group) {
    for (const auto& h : having) {
        double agg;
        if (h.kind == frameql::HavingTerm::Kind::CountStar) {
            agg = static_cast<double>(group.size());
        } else {
            agg = 0.0;
            for (const auto& r : group)
                if (r.object_class == h.class_name) agg += 1.0;
        }
        if (!compare_num(agg, h.op, h.value)) return false;
    }
    return true;
}

// Per-frame scrubbing predicate check: every HAVING conjunct evaluated on
// one frame's records.
inline bool frame_satisfies(const std::vector<frameql::HavingTerm>& having,
                            const std::vector<DetectionRecord>& frame_records) {
    return having_holds(having, frame_records);
}

// Greedy GAP acceptance: candidate accepted only if at least `gap` frames
// from every already-accepted timestamp.
inline bool gap_ok(const std::vector<std::int64_t>& accepted, std::int64_t t, std::int64_t gap) {
    for (std::int64_t a : accepted)
        if (std::llabs(a - t) < gap) return false;
    return true;
}

// Group records by key (timestamp or trackid) and keep groups passing HAVING.
inline std::map<std::int64_t, std::vector<DetectionRecord>> group_records(
    const std::vector<DetectionRecord>& records, frameql::GroupBy by) {
    std::map<std::int64_t, std::vector<DetectionRecord>> groups;
    for (const auto& r : records) {
        std::int64_t key = by == frameql::GroupBy::TrackId ? r.trackid.value_or(-1) : r.timestamp;
        groups[key].push_back(r);
    }
    return groups;
}

}  // namespace vqe::relalg
