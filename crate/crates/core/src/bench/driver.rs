use std::fmt::Write as _;

use crate::codegen::SourceArtifact;
use crate::ir::GemmSpec;

/// Standalone `main` around an operator with the GEMM ABI.
///
/// `check A B C` reads raw native-endian A and B, runs the operator once on
/// a zeroed C and writes C. `time R` fills A and B from a fixed LCG, runs
/// one warmup and `R` timed calls (C re-zeroed outside the timed region)
/// and prints one elapsed-seconds line per call.
pub(crate) fn driver_source(artifact: &SourceArtifact, spec: &GemmSpec) -> String {
    let t = spec.dtype.c_type();
    let mut out = String::new();
    out.push_str("#define _POSIX_C_SOURCE 200809L\n#include <stdio.h>\n#include <stdlib.h>\n#include <string.h>\n#include <time.h>\n\n");
    let _ = writeln!(out, "#include \"{}\"\n", artifact.main_file().path);
    let _ = writeln!(
        out,
        "#define FORGE_DRV_M {}L\n#define FORGE_DRV_N {}L\n#define FORGE_DRV_K {}L\n",
        spec.m, spec.n, spec.k
    );
    let entry = &artifact.entry_symbol;
    let _ = write!(
        out,
        "static double forge_now(void)\n{{\n\
         \x20   struct timespec ts;\n\
         \x20   clock_gettime(CLOCK_MONOTONIC, &ts);\n\
         \x20   return (double)ts.tv_sec + 1e-9 * (double)ts.tv_nsec;\n}}\n\n\
         static int forge_io(const char *path, void *buf, size_t bytes, int writing)\n{{\n\
         \x20   FILE *f = fopen(path, writing ? \"wb\" : \"rb\");\n\
         \x20   size_t done;\n\
         \x20   if (!f)\n\
         \x20       return 1;\n\
         \x20   done = writing ? fwrite(buf, 1, bytes, f) : fread(buf, 1, bytes, f);\n\
         \x20   fclose(f);\n\
         \x20   return done != bytes;\n}}\n\n\
         int main(int argc, char **argv)\n{{\n\
         \x20   const size_t na = FORGE_DRV_M * FORGE_DRV_K, nb = FORGE_DRV_K * FORGE_DRV_N, nc = FORGE_DRV_M * FORGE_DRV_N;\n\
         \x20   {t} *a = malloc(na * sizeof({t})), *b = malloc(nb * sizeof({t})), *c = malloc(nc * sizeof({t}));\n\
         \x20   if (!a || !b || !c) {{\n\
         \x20       fprintf(stderr, \"allocation failed\\n\");\n\
         \x20       return 1;\n\
         \x20   }}\n\
         \x20   if (argc == 5 && strcmp(argv[1], \"check\") == 0) {{\n\
         \x20       if (forge_io(argv[2], a, na * sizeof({t}), 0) || forge_io(argv[3], b, nb * sizeof({t}), 0)) {{\n\
         \x20           fprintf(stderr, \"cannot read inputs\\n\");\n\
         \x20           return 1;\n\
         \x20       }}\n\
         \x20       memset(c, 0, nc * sizeof({t}));\n\
         \x20       {entry}(a, b, c, FORGE_DRV_M, FORGE_DRV_N, FORGE_DRV_K);\n\
         \x20       if (forge_io(argv[4], c, nc * sizeof({t}), 1)) {{\n\
         \x20           fprintf(stderr, \"cannot write output\\n\");\n\
         \x20           return 1;\n\
         \x20       }}\n\
         \x20       return 0;\n\
         \x20   }}\n\
         \x20   if (argc == 3 && strcmp(argv[1], \"time\") == 0) {{\n\
         \x20       unsigned long long s = 12345u;\n\
         \x20       size_t i;\n\
         \x20       int r, reps = atoi(argv[2]);\n\
         \x20       for (i = 0; i < na + nb; ++i) {{\n\
         \x20           s = s * 6364136223846793005ull + 1442695040888963407ull;\n\
         \x20           const {t} v = ({t})((double)(s >> 11) / 4503599627370496.0 - 1.0);\n\
         \x20           if (i < na)\n\
         \x20               a[i] = v;\n\
         \x20           else\n\
         \x20               b[i - na] = v;\n\
         \x20       }}\n\
         \x20       for (r = -1; r < reps; ++r) {{\n\
         \x20           double t0, t1;\n\
         \x20           memset(c, 0, nc * sizeof({t}));\n\
         \x20           t0 = forge_now();\n\
         \x20           {entry}(a, b, c, FORGE_DRV_M, FORGE_DRV_N, FORGE_DRV_K);\n\
         \x20           t1 = forge_now();\n\
         \x20           if (r >= 0)\n\
         \x20               printf(\"%.9e\\n\", t1 - t0);\n\
         \x20       }}\n\
         \x20       return 0;\n\
         \x20   }}\n\
         \x20   fprintf(stderr, \"usage: %s check A B C | time REPEATS\\n\", argv[0]);\n\
         \x20   return 2;\n}}\n"
    );
    out
}
