#include "toydb.h"

#include <string.h>

static void absFunc(ToyContext *ctx, int argc, const toy_int *argv) {
  long long x = TOY_GETARG(argv, 0);
  TOY_RETURN(ctx, x < 0 ? -x : x);
}

static void negFunc(ToyContext *ctx, int argc, const toy_int *argv) {
  long long x = TOY_GETARG(argv, 0);
  TOY_RETURN(ctx, -x);
}

static void squareFunc(ToyContext *ctx, int argc, const toy_int *argv) {
  long long x = TOY_GETARG(argv, 0);
  TOY_RETURN(ctx, x * x);
}

static void max2Func(ToyContext *ctx, int argc, const toy_int *argv) {
  long long a = TOY_GETARG(argv, 0);
  long long b = TOY_GETARG(argv, 1);
  TOY_RETURN(ctx, a > b ? a : b);
}

static void max3Func(ToyContext *ctx, int argc, const toy_int *argv) {
  long long best = TOY_GETARG(argv, 0);
  int i;
  for (i = 1; i < 3; i++) {
    if (TOY_GETARG(argv, i) > best) best = TOY_GETARG(argv, i);
  }
  TOY_RETURN(ctx, best);
}

static void yearFunc(ToyContext *ctx, int argc, const toy_int *argv) {
  long long d = TOY_GETARG(argv, 0);
  TOY_RETURN(ctx, TOY_DATE_YEAR(d));
}

static void monthFunc(ToyContext *ctx, int argc, const toy_int *argv) {
  long long d = TOY_GETARG(argv, 0);
  long long m = TOY_DATE_MONTH(d);
  TOY_RETURN(ctx, m);
}

static void dayFunc(ToyContext *ctx, int argc, const toy_int *argv) {
  long long d = TOY_GETARG(argv, 0);
  if (d < 0) TOY_ERROR(ctx, "negative date");
  TOY_RETURN(ctx, TOY_DATE_DAY(d));
}

const ToyBuiltin aBuiltin[] = {
  { "toy_abs", 1, absFunc },
  { "toy_neg", 1, negFunc },
  { "toy_square", 1, squareFunc },
  { "toy_max", 2, max2Func },
  { "toy_max", 3, max3Func },
  TOY_DATE_FUNC("toy_year", 1, yearFunc),
  TOY_DATE_FUNC("toy_month", 1, monthFunc),
  TOY_DATE_FUNC("toy_day", 1, dayFunc),
  { 0, 0, 0 }
};

const ToyBuiltin *toy_find_builtin(const char *name, int argc) {
  const ToyBuiltin *b;
  for (b = aBuiltin; b->name; b++) {
    if (strcmp(b->name, name) == 0 && b->arity == argc) return b;
  }
  return 0;
}
