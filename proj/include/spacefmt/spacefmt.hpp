#pragma once

#include "spacefmt/brnn.hpp"
#include "spacefmt/corpus.hpp"
#include "spacefmt/errors.hpp"
#include "spacefmt/eval.hpp"
#include "spacefmt/keywords.hpp"
#include "spacefmt/lexer.hpp"
#include "spacefmt/ngram.hpp"
#include "spacefmt/predictor.hpp"
#include "spacefmt/synthetic.hpp"
