#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace covnet {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// --- model construction ---
struct UnknownLink : Error {
    explicit UnknownLink(const std::string& id) : Error("unknown link: " + id) {}
};
struct UnknownBus : Error {
    explicit UnknownBus(const std::string& id) : Error("unknown bus: " + id) {}
};
struct DuplicatePlacement : Error {
    explicit DuplicatePlacement(const std::string& id)
        : Error("link already hosts a charging station: " + id) {}
};
struct NoFeasiblePath : Error {
    explicit NoFeasiblePath(const std::string& what) : Error(what) {}
};
struct WrongKind : Error {
    explicit WrongKind(const std::string& what) : Error(what) {}
};
struct Saturated : Error {
    explicit Saturated(const std::string& what) : Error(what) {}
};

// --- solvers ---
struct InfeasibleDemand : Error {
    explicit InfeasibleDemand(const std::string& what) : Error(what) {}
};
struct SolverFailure : Error {
    explicit SolverFailure(const std::string& what) : Error(what) {}
};
struct Infeasible : Error {
    explicit Infeasible(const std::string& what) : Error(what) {}
};
struct DualsUnavailable : Error {
    explicit DualsUnavailable(const std::string& what) : Error(what) {}
};
struct NotConverged : Error {
    explicit NotConverged(const std::string& what) : Error(what) {}
};

// --- coupling / uncertainty ---
struct UnmappedFcs : Error {
    explicit UnmappedFcs(const std::string& what) : Error(what) {}
};
struct MissingZone : Error {
    explicit MissingZone(const std::string& what) : Error(what) {}
};
struct TooLarge : Error {
    explicit TooLarge(const std::string& what) : Error(what) {}
};

// --- scenario ingestion ---
struct ParseError : Error {
    explicit ParseError(const std::string& what) : Error(what) {}
};

// Collects every failed invariant of a scenario document instead of
// stopping at the first one.
struct ValidationErrors : Error {
    std::vector<std::string> violations;
    explicit ValidationErrors(std::vector<std::string> v)
        : Error(join(v)), violations(std::move(v)) {}

  private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out = "scenario validation failed (" + std::to_string(v.size()) + " violations)";
        for (const auto& s : v) out += "\n  - " + s;
        return out;
    }
};

}  // namespace covnet
