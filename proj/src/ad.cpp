#include "nrroom/ad.hpp"

namespace nrroom::ad {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* active_tape() { return g_active_tape; }
void set_active_tape(Tape* t) { g_active_tape = t; }

}  // namespace nrroom::ad
