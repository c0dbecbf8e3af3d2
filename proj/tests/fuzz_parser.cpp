// Mutation fuzzer for the stream, container and trace parsers.
// usage: fuzz_parser <fixture dir> <iterations> [seed]

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "fuzz_common.hpp"

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

using prnu::fuzz::load_corpus;
using prnu::fuzz::mutate;

int main(int argc, char** argv) {
  if (argc < 3) {
    std::cerr << "usage: fuzz_parser <fixture dir> <iterations> [seed]\n";
    return 1;
  }
  const fs::path dir = argv[1];
  const long long iterations = std::atoll(argv[2]);
  const std::uint64_t seed = argc > 3 ? std::strtoull(argv[3], nullptr, 10) : 20261015;
  const auto corpus = load_corpus(dir);
  if (corpus.streams.empty()) {
    std::cerr << "no fixture streams in " << dir << "\n";
    return 1;
  }

  // Watchdog: any single input running over 10 s aborts the run as a hang.
  std::atomic<bool> done{false};
  std::atomic<long long> current{-1};
  std::thread watchdog([&] {
    long long last = -2;
    auto since = Clock::now();
    while (!done) {
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
      const long long c = current.load();
      if (c != last) {
        last = c;
        since = Clock::now();
      } else if (Clock::now() - since > std::chrono::seconds(10)) {
        std::cerr << "HANG on input " << c << "\n";
        std::_Exit(2);
      }
    }
  });

  std::mt19937_64 rng(seed);
  std::map<std::string, long long> outcomes;
  double worst = 0.0;
  long long slow = 0, unexpected = 0;
  for (long long i = 0; i < iterations; ++i) {
    current = i;
    const bool trace = !corpus.traces.empty() && rng() % 10 == 0;
    const auto& src = trace ? corpus.traces : corpus.streams;
    const prnu::Bytes input = mutate(src[rng() % src.size()], rng, src);
    const auto t0 = Clock::now();
    std::string outcome = prnu::fuzz::run_one(input, trace);
    if (outcome.rfind("UNEXPECTED", 0) == 0) {
      ++unexpected;
      std::cerr << "input " << i << ": " << outcome << "\n";
      outcome = "UNEXPECTED";
    }
    const double dt = std::chrono::duration<double>(Clock::now() - t0).count();
    worst = std::max(worst, dt);
    if (dt > 1.0) {
      ++slow;
      std::cerr << "input " << i << " took " << dt << " s\n";
    }
    ++outcomes[outcome];
  }
  done = true;
  watchdog.join();

  std::cout << "fuzz_parser: " << iterations << " inputs, seed " << seed << ", slowest " << worst << " s\n";
  for (const auto& [k, v] : outcomes) std::cout << "  " << k << ": " << v << "\n";
  if (slow || unexpected) {
    std::cout << "FAIL: " << slow << " inputs over 1 s, " << unexpected << " unexpected exceptions\n";
    return 1;
  }
  std::cout << "PASS\n";
  return 0;
}
