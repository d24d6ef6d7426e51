#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace qm {

// Scripted mutations, each emulating a representative implementation bug at
// a specific point in a checked pipeline. The matching suite must catch it.
enum class Fault {
  None,
  ScanCombine,      // associative combine applied with swapped operands
  CrossMergeIndex,  // one directional sequence folded through flipped steps
  PrunePhase,       // retained indices shifted off the block start
  ShapeOffByOne,    // trailing partial block dropped instead of kept
  FlopTable,        // scan per-element constant off by one
};

Fault fault_from_name(const std::string& name);
const std::vector<std::string>& fault_names();

struct CheckResult {
  std::string suite;   // scan_equivalence, round_trip, idempotence,
                       // shape_law, flop_consistency
  std::string module;  // module the failing contract belongs to
  bool passed = false;
  std::string detail;  // reproduction inputs on failure
};

struct ValidationReport {
  std::vector<CheckResult> checks;
  bool all_passed() const;
};

ValidationReport run_validation(std::uint64_t seed, Fault fault = Fault::None);

// Registry mapping every module invariant to the validation suite or unit
// test that exercises it. A test asserts the registry is complete.
struct InvariantCoverage {
  std::string invariant_id;
  std::string covered_by;
};

const std::vector<InvariantCoverage>& validation_invariant_checklist();

}  // namespace qm
