#pragma once

#include "cim/diffusion.hpp"
#include "cim/evaluation.hpp"
#include "cim/nda.hpp"
#include "cim/tucker.hpp"
#include "cim/twpda.hpp"
#include "cim/types.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace cim {

/// A malformed or unreadable input file; messages carry path and, for parse
/// failures, the 1-based line number.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Event logs: first line "N M Q", then one "source dest meme time" line per
// event.
void write_event_log(const std::string& path, const DiffusionLog& log);
DiffusionLog read_event_log(const std::string& path);

// Sparse tensor interchange: first line "I1 I2 I3 I4", then one
// "i j m q value" line per stored cell. Values round-trip exactly.
void write_tensor(const std::string& path, const SparseTensor4d& t);
SparseTensor4d read_tensor(const std::string& path);

// Dense matrix interchange: first line "rows cols", then one line per row.
// Values round-trip exactly.
void write_matrix(const std::string& path, const Matrixd& m);
Matrixd read_matrix(const std::string& path);

// Model checkpoints: first line "N M Q R", then the core (R^4 values) and
// the four factor matrices in row-major order. Exact round-trip.
void write_checkpoint(const std::string& path, const TuckerModeld& m);
TuckerModeld read_checkpoint(const std::string& path);

// Report emission (CSV with header rows).
void write_loss_trace_csv(const std::string& path, const FitReport& report);
void write_plan_csv(const std::string& path, const WindowPlan& plan);
void write_eval_csv(const std::string& path,
                    const std::vector<EvalReport>& reports);
void write_bench_csv(const std::string& path,
                     const std::vector<BenchRow>& rows);

/// Merged TWPDA estimates in the sparse interchange format, keeping cells
/// with |value| > threshold; slices are materialized one at a time.
void write_merged_estimates(const std::string& path, const TwpdaFitd& fit,
                            double threshold);

/// Shortest decimal form that parses back to exactly the same double.
std::string format_double(double v);

}  // namespace cim
