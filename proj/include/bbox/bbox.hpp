#pragma once

#include "bbox/analysis.hpp"
#include "bbox/chainsig.hpp"
#include "bbox/consensus.hpp"
#include "bbox/crypto.hpp"
#include "bbox/devicegroup.hpp"
#include "bbox/ledger.hpp"
#include "bbox/membership.hpp"
#include "bbox/messages.hpp"
#include "bbox/scenario.hpp"
#include "bbox/simnet.hpp"
