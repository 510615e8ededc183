#pragma once

// Umbrella header.

#include "fluxtrader/autoencoder.hpp"
#include "fluxtrader/backtest.hpp"
#include "fluxtrader/checkpoint.hpp"
#include "fluxtrader/classifier.hpp"
#include "fluxtrader/cnn.hpp"
#include "fluxtrader/config.hpp"
#include "fluxtrader/error.hpp"
#include "fluxtrader/fetch.hpp"
#include "fluxtrader/gan.hpp"
#include "fluxtrader/grad_check.hpp"
#include "fluxtrader/layers.hpp"
#include "fluxtrader/market_data.hpp"
#include "fluxtrader/optim.hpp"
#include "fluxtrader/pipeline.hpp"
#include "fluxtrader/synthetic.hpp"
#include "fluxtrader/tensor.hpp"
