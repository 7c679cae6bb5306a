// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <exception>
#include <optional>
#include <thread>
#include <utility>

#include "dda/transport.hpp"

namespace dda::detail {

inline bool is_disconnect(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const ConnectionError&) {
    return true;
  } catch (...) {
    return false;
  }
}

/// Runs `first(Endpoint&)` on the calling thread and `second(Endpoint&)` on
/// a helper thread. Each side owns its endpoint, so a side that throws
/// closes the connection and unblocks its peer. When both fail, the error
/// that is not a mere disconnect wins.
template <class A, class B>
auto run_pair(std::pair<Endpoint, Endpoint> endpoints, A&& first, B&& second) {
  using RA = decltype(first(endpoints.first));
  using RB = decltype(second(endpoints.second));
  std::optional<RA> ra;
  std::optional<RB> rb;
  std::exception_ptr ea;
  std::exception_ptr eb;
  std::thread helper([&, ep = std::move(endpoints.second)]() mutable {
    Endpoint local = std::move(ep);
    try {
      rb.emplace(second(local));
    } catch (...) {
      eb = std::current_exception();
    }
  });
  {
    Endpoint local = std::move(endpoints.first);
    try {
      ra.emplace(first(local));
    } catch (...) {
      ea = std::current_exception();
    }
  }
  helper.join();
  if (ea && eb) std::rethrow_exception(is_disconnect(ea) ? eb : ea);
  if (ea) std::rethrow_exception(ea);
  if (eb) std::rethrow_exception(eb);
  return std::pair<RA, RB>(std::move(*ra), std::move(*rb));
}

}  // namespace dda::detail
