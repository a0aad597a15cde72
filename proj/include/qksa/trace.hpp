#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

namespace qksa {

/// Resource counters filled in while a hypothesis (tomography strategy)
/// executes, plus the prediction deviations observed over the window.
struct ExecutionTrace
{
    std::uint64_t measurements = 0;  ///< measurement primitives (shots)
    std::uint64_t matrix_ops = 0;    ///< matrix products, solves, decompositions
    std::uint64_t peak_cells = 0;    ///< largest live matrix, in complex cells
    std::vector<double> deviations;  ///< Delta(prediction, percept) per step

    void count_measurements(std::uint64_t n = 1) { measurements += n; }
    void count_matrix_ops(std::uint64_t n = 1) { matrix_ops += n; }
    void note_cells(std::uint64_t cells) { peak_cells = std::max(peak_cells, cells); }

    void merge(const ExecutionTrace& other)
    {
        measurements += other.measurements;
        matrix_ops += other.matrix_ops;
        peak_cells = std::max(peak_cells, other.peak_cells);
        deviations.insert(deviations.end(), other.deviations.begin(), other.deviations.end());
    }

    bool empty() const { return measurements == 0 && matrix_ops == 0 && deviations.empty(); }
};

} // namespace qksa
