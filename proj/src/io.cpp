#include "cim/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <utility>

namespace cim {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open for reading");
  return in;
}

[[noreturn]] void parse_fail(const std::string& path, std::size_t line,
                             const std::string& what) {
  std::ostringstream msg;
  msg << path << ":" << line << ": " << what;
  throw DataError(msg.str());
}

/// Line-oriented reader that reports 1-based line numbers on bad input.
class LineParser {
 public:
  LineParser(std::ifstream in, std::string path)
      : in_(std::move(in)), path_(std::move(path)) {}

  /// Next non-empty line as a token stream; false at end of file.
  bool next_line() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_number_;
      tokens_.clear();
      tokens_.str(line);
      if (tokens_ >> std::ws && !tokens_.eof()) {
        tokens_.clear();
        tokens_.seekg(0);
        return true;
      }
    }
    return false;
  }

  template <typename T>
  T field(const char* name) {
    T value{};
    if (!(tokens_ >> value)) {
      parse_fail(path_, line_number_, std::string("expected ") + name);
    }
    return value;
  }

  void expect_line_end() {
    std::string rest;
    if (tokens_ >> rest) {
      parse_fail(path_, line_number_, "unexpected trailing field '" + rest + "'");
    }
  }

  std::size_t line_number() const { return line_number_; }
  const std::string& path() const { return path_; }

 private:
  std::ifstream in_;
  std::string path_;
  std::istringstream tokens_;
  std::size_t line_number_ = 0;
};

void write_row(std::ofstream& out, const Matrixd& m, Index row) {
  for (Index j = 0; j < m.cols(); ++j) {
    if (j) out << ' ';
    out << format_double(m(row, j));
  }
  out << '\n';
}

void require_written(const std::ofstream& out, const std::string& path) {
  if (!out) throw DataError(path + ": write failed");
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

// ---------------------------------------------------------------------------
// Event logs
// ---------------------------------------------------------------------------

void write_event_log(const std::string& path, const DiffusionLog& log) {
  std::ofstream out = open_out(path);
  out << log.dims.nodes << ' ' << log.dims.memes << ' ' << log.dims.times
      << '\n';
  for (const InfectionEvent& e : log.events) {
    out << e.source << ' ' << e.dest << ' ' << e.meme << ' ' << e.time << '\n';
  }
  require_written(out, path);
}

DiffusionLog read_event_log(const std::string& path) {
  LineParser p(open_in(path), path);
  if (!p.next_line()) parse_fail(path, 1, "missing 'N M Q' header");
  DiffusionLog log;
  log.dims.nodes = p.field<Index>("node count N");
  log.dims.memes = p.field<Index>("meme count M");
  log.dims.times = p.field<Index>("time count Q");
  p.expect_line_end();
  if (log.dims.nodes <= 0 || log.dims.memes <= 0 || log.dims.times <= 0) {
    parse_fail(path, p.line_number(), "dims must be positive");
  }
  while (p.next_line()) {
    InfectionEvent e;
    e.source = p.field<Index>("source");
    e.dest = p.field<Index>("dest");
    e.meme = p.field<Index>("meme");
    e.time = p.field<Index>("time");
    p.expect_line_end();
    try {
      validate_event(log.dims, e, log.events.size());
    } catch (const std::invalid_argument& err) {
      parse_fail(path, p.line_number(), err.what());
    }
    log.events.push_back(e);
  }
  return log;
}

// ---------------------------------------------------------------------------
// Sparse tensors
// ---------------------------------------------------------------------------

void write_tensor(const std::string& path, const SparseTensor4d& t) {
  std::ofstream out = open_out(path);
  out << t.dims()[0] << ' ' << t.dims()[1] << ' ' << t.dims()[2] << ' '
      << t.dims()[3] << '\n';
  for (Index e = 0; e < t.nnz(); ++e) {
    const Cell& c = t.cells()[static_cast<std::size_t>(e)];
    out << c[0] << ' ' << c[1] << ' ' << c[2] << ' ' << c[3] << ' '
        << format_double(t.values()[static_cast<std::size_t>(e)]) << '\n';
  }
  require_written(out, path);
}

SparseTensor4d read_tensor(const std::string& path) {
  LineParser p(open_in(path), path);
  if (!p.next_line()) parse_fail(path, 1, "missing 'I1 I2 I3 I4' header");
  Dims4 dims;
  for (int d = 0; d < 4; ++d) dims[d] = p.field<Index>("dimension");
  p.expect_line_end();
  std::vector<Cell> cells;
  std::vector<double> values;
  while (p.next_line()) {
    Cell c;
    for (int d = 0; d < 4; ++d) c[d] = p.field<Index>("cell index");
    values.push_back(p.field<double>("cell value"));
    p.expect_line_end();
    cells.push_back(c);
  }
  try {
    return SparseTensor4d::from_coords(dims, std::move(cells),
                                       std::move(values));
  } catch (const std::invalid_argument& err) {
    throw DataError(path + ": " + err.what());
  }
}

// ---------------------------------------------------------------------------
// Dense matrices
// ---------------------------------------------------------------------------

void write_matrix(const std::string& path, const Matrixd& m) {
  std::ofstream out = open_out(path);
  out << m.rows() << ' ' << m.cols() << '\n';
  for (Index i = 0; i < m.rows(); ++i) write_row(out, m, i);
  require_written(out, path);
}

Matrixd read_matrix(const std::string& path) {
  LineParser p(open_in(path), path);
  if (!p.next_line()) parse_fail(path, 1, "missing 'rows cols' header");
  const auto rows = p.field<Index>("row count");
  const auto cols = p.field<Index>("column count");
  p.expect_line_end();
  if (rows < 0 || cols < 0) {
    parse_fail(path, p.line_number(), "dims must be nonnegative");
  }
  Matrixd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    if (!p.next_line()) {
      parse_fail(path, p.line_number() + 1, "missing matrix row");
    }
    for (Index j = 0; j < cols; ++j) m(i, j) = p.field<double>("matrix entry");
    p.expect_line_end();
  }
  if (p.next_line()) {
    parse_fail(path, p.line_number(), "unexpected extra row");
  }
  return m;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void write_checkpoint(const std::string& path, const TuckerModeld& m) {
  std::ofstream out = open_out(path);
  const Dims4 dims = m.dims();
  out << dims[0] << ' ' << dims[2] << ' ' << dims[3] << ' ' << m.rank << '\n';
  for (Index i = 0; i < m.core.size(); ++i) {
    if (i) out << ' ';
    out << format_double(m.core[i]);
  }
  out << '\n';
  for (const Matrixd* f :
       {&m.src_factor, &m.dst_factor, &m.meme_factor, &m.time_factor}) {
    for (Index i = 0; i < f->rows(); ++i) write_row(out, *f, i);
  }
  require_written(out, path);
}

TuckerModeld read_checkpoint(const std::string& path) {
  LineParser p(open_in(path), path);
  if (!p.next_line()) parse_fail(path, 1, "missing 'N M Q R' header");
  const auto n = p.field<Index>("node count N");
  const auto mm = p.field<Index>("meme count M");
  const auto q = p.field<Index>("time count Q");
  const auto r = p.field<Index>("rank R");
  p.expect_line_end();
  if (n <= 0 || mm <= 0 || q <= 0 || r <= 0) {
    parse_fail(path, p.line_number(), "header values must be positive");
  }

  TuckerModeld m;
  m.rank = r;
  m.core.resize(r * r * r * r);
  if (!p.next_line()) parse_fail(path, p.line_number() + 1, "missing core");
  for (Index i = 0; i < m.core.size(); ++i) {
    m.core[i] = p.field<double>("core entry");
  }
  p.expect_line_end();

  auto read_factor = [&p](Index rows, Index cols, const char* name) {
    Matrixd f(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      if (!p.next_line()) {
        parse_fail(p.path(), p.line_number() + 1,
                   std::string("missing ") + name + " row");
      }
      for (Index j = 0; j < cols; ++j) f(i, j) = p.field<double>(name);
      p.expect_line_end();
    }
    return f;
  };
  m.src_factor = read_factor(n, r, "source factor");
  m.dst_factor = read_factor(n, r, "destination factor");
  m.meme_factor = read_factor(mm, r, "meme factor");
  m.time_factor = read_factor(q, r, "time factor");
  if (p.next_line()) {
    parse_fail(path, p.line_number(), "unexpected extra row");
  }
  return m;
}

// ---------------------------------------------------------------------------
// CSV reports
// ---------------------------------------------------------------------------

void write_loss_trace_csv(const std::string& path, const FitReport& report) {
  std::ofstream out = open_out(path);
  out << "epoch,total,recon,reg,sda,nma,mc,ts\n";
  out << "0," << format_double(report.initial_loss) << ",,,,,,\n";
  for (std::size_t e = 0; e < report.loss_trace.size(); ++e) {
    const ObjectiveTerms& t = report.loss_trace[e];
    out << (e + 1) << ',' << format_double(t.total) << ','
        << format_double(t.recon) << ',' << format_double(t.reg) << ','
        << format_double(t.sda) << ',' << format_double(t.nma) << ','
        << format_double(t.mc) << ',' << format_double(t.ts) << '\n';
  }
  require_written(out, path);
}

void write_plan_csv(const std::string& path, const WindowPlan& plan) {
  std::ofstream out = open_out(path);
  out << "window,start,end,width,nnz\n";
  for (std::size_t w = 0; w < plan.windows.size(); ++w) {
    const TimeWindow& win = plan.windows[w];
    out << (w + 1) << ',' << win.start << ',' << win.end << ',' << win.width()
        << ',' << plan.window_nnz[w] << '\n';
  }
  require_written(out, path);
}

void write_eval_csv(const std::string& path,
                    const std::vector<EvalReport>& reports) {
  std::ofstream out = open_out(path);
  out << "method,fraction,seed,ra,rmse,wall_seconds\n";
  for (const EvalReport& r : reports) {
    out << r.method << ',' << format_double(r.removal_fraction) << ','
        << r.seed << ',' << format_double(r.ra) << ','
        << format_double(r.rmse) << ',' << format_double(r.wall_time_seconds)
        << '\n';
  }
  require_written(out, path);
}

void write_bench_csv(const std::string& path,
                     const std::vector<BenchRow>& rows) {
  std::ofstream out = open_out(path);
  out << "nodes,memes,times,nnz,solver,threads,wall_seconds,speedup\n";
  for (const BenchRow& r : rows) {
    out << r.nodes << ',' << r.memes << ',' << r.times << ',' << r.nnz << ','
        << r.solver << ',' << r.threads << ','
        << format_double(r.wall_time_seconds) << ','
        << format_double(r.speedup) << '\n';
  }
  require_written(out, path);
}

void write_merged_estimates(const std::string& path, const TwpdaFitd& fit,
                            double threshold) {
  std::ofstream out = open_out(path);
  const Dims4& dims = fit.dims;
  out << dims[0] << ' ' << dims[1] << ' ' << dims[2] << ' ' << dims[3] << '\n';
  for (Index q = 0; q < dims[3]; ++q) {
    const DenseSliced slice = fit.merged_slice(q);
    for (Index k = 0; k < slice.m; ++k) {
      for (Index i = 0; i < slice.n; ++i) {
        for (Index j = 0; j < slice.n; ++j) {
          const double v = slice.at(i, j, k);
          if (std::abs(v) > threshold) {
            out << i << ' ' << j << ' ' << k << ' ' << q << ' '
                << format_double(v) << '\n';
          }
        }
      }
    }
  }
  require_written(out, path);
}

}  // namespace cim
