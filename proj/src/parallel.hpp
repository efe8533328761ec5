#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <optional>
#include <vector>

#include <omp.h>

namespace qmargin::detail {

/// Evaluate eval(0..count-1) in order and stop after the first result for
/// which stop() holds. The parallel path works in blocks of a few tasks per
/// thread and truncates at the first stopping index, so both paths return
/// the same prefix.
template <class T, class Eval, class Stop>
std::vector<T> ordered_sweep(std::size_t count, bool parallel, Eval&& eval, Stop&& stop) {
  std::vector<T> out;
  if (!parallel || count < 2 || omp_get_max_threads() < 2) {
    for (std::size_t i = 0; i < count; ++i) {
      out.push_back(eval(i));
      if (stop(out.back())) break;
    }
    return out;
  }
  const std::size_t block = std::max<std::size_t>(2, 2 * static_cast<std::size_t>(omp_get_max_threads()));
  for (std::size_t start = 0; start < count; start += block) {
    const std::size_t len = std::min(block, count - start);
    std::vector<std::optional<T>> slot(len);
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(len); ++k) {
      try {
        slot[static_cast<std::size_t>(k)] = eval(start + static_cast<std::size_t>(k));
      } catch (...) {
#pragma omp critical(qmargin_sweep_error)
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
    for (auto& s : slot) {
      out.push_back(std::move(*s));
      if (stop(out.back())) return out;
    }
  }
  return out;
}

/// Evaluate all tasks; results in index order.
template <class T, class Eval>
std::vector<T> parallel_map(std::size_t count, bool parallel, Eval&& eval) {
  std::vector<std::optional<T>> slot(count);
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 1) if (parallel && count > 1)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(count); ++k) {
    try {
      slot[static_cast<std::size_t>(k)] = eval(static_cast<std::size_t>(k));
    } catch (...) {
#pragma omp critical(qmargin_map_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  std::vector<T> out;
  out.reserve(count);
  for (auto& s : slot) out.push_back(std::move(*s));
  return out;
}

}  // namespace qmargin::detail
