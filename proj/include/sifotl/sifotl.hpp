#ifndef SIFOTL_SIFOTL_HPP
#define SIFOTL_SIFOTL_HPP

// Umbrella header. The HTTP provider is opt-in (include provider_http.hpp).

#include <sifotl/benchgen.hpp>
#include <sifotl/boosting.hpp>
#include <sifotl/dsl.hpp>
#include <sifotl/errors.hpp>
#include <sifotl/eval.hpp>
#include <sifotl/features.hpp>
#include <sifotl/noise_rules.hpp>
#include <sifotl/pareto.hpp>
#include <sifotl/pipeline.hpp>
#include <sifotl/provider.hpp>
#include <sifotl/screen.hpp>
#include <sifotl/stats.hpp>
#include <sifotl/synth.hpp>
#include <sifotl/table.hpp>
#include <sifotl/weighted_tree.hpp>

#endif // SIFOTL_SIFOTL_HPP
