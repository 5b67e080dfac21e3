// SPDX-License-Identifier: Apache-2.0
/*
 * Fixture tree: a condensed 32-bit ARM JIT. Each eBPF instruction is
 * translated into a short sequence of emit_* calls that operate on register
 * pairs (lo, hi).
 */
#include <linux/bpf.h>
#include <linux/errno.h>
#include "bpf_jit_32.h"

#define STACK_SIZE 512

static bool is_stacked(s8 reg)
{
	return reg < 0;
}

static int jmp_offset(const struct jit_ctx *ctx, int bpf_off)
{
	int to = ctx->offsets[ctx->idx + bpf_off + 1];
	int from = ctx->offsets[ctx->idx];

	return to - from - 2;
}

static int build_insn(const struct bpf_insn *insn, struct jit_ctx *ctx)
{
	const u8 code = insn->code;
	const s8 *dst = bpf2a32[insn->dst_reg];
	const s8 *src = bpf2a32[insn->src_reg];
	const s32 imm = insn->imm;
	const s16 off = insn->off;
	const bool is64 = BPF_CLASS(code) == BPF_ALU64;
	u64 imm64;

	if (insn->dst_reg == BPF_REG_FP && BPF_CLASS(code) != BPF_STX &&
	    BPF_CLASS(code) != BPF_ST && BPF_CLASS(code) != BPF_LDX &&
	    BPF_CLASS(code) != BPF_JMP && BPF_CLASS(code) != BPF_JMP32)
		return -EACCES;

	switch (code) {
	/* dst = src */
	case BPF_ALU | BPF_MOV | BPF_X:
	case BPF_ALU64 | BPF_MOV | BPF_X:
		if (off == 0) {
			emit_a32_mov_r64(is64, dst, src, ctx);
			break;
		}
		/* BPF_MOVSX: sign extend the low off bits of src */
		if (off != 8 && off != 16 && off != 32)
			return -EINVAL;
		emit_a32_movsx_r64(is64, off, dst, src, ctx);
		break;
	/* dst = imm */
	case BPF_ALU | BPF_MOV | BPF_K:
	case BPF_ALU64 | BPF_MOV | BPF_K:
		emit_a32_mov_se_i64(is64, dst, imm, ctx);
		break;
	/* dst = dst + src/imm, and the other simple ALU ops */
	case BPF_ALU | BPF_ADD | BPF_K:
	case BPF_ALU | BPF_ADD | BPF_X:
	case BPF_ALU64 | BPF_ADD | BPF_K:
	case BPF_ALU64 | BPF_ADD | BPF_X:
		emit_a32_alu_op(BPF_ADD, is64, dst, src, imm, code, ctx);
		break;
	case BPF_ALU | BPF_SUB | BPF_K:
	case BPF_ALU | BPF_SUB | BPF_X:
	case BPF_ALU64 | BPF_SUB | BPF_K:
	case BPF_ALU64 | BPF_SUB | BPF_X:
		emit_a32_alu_op(BPF_SUB, is64, dst, src, imm, code, ctx);
		break;
	case BPF_ALU | BPF_OR | BPF_K:
	case BPF_ALU | BPF_OR | BPF_X:
	case BPF_ALU64 | BPF_OR | BPF_K:
	case BPF_ALU64 | BPF_OR | BPF_X:
		emit_a32_alu_op(BPF_OR, is64, dst, src, imm, code, ctx);
		break;
	case BPF_ALU | BPF_AND | BPF_K:
	case BPF_ALU | BPF_AND | BPF_X:
	case BPF_ALU64 | BPF_AND | BPF_K:
	case BPF_ALU64 | BPF_AND | BPF_X:
		emit_a32_alu_op(BPF_AND, is64, dst, src, imm, code, ctx);
		break;
	case BPF_ALU | BPF_XOR | BPF_K:
	case BPF_ALU | BPF_XOR | BPF_X:
	case BPF_ALU64 | BPF_XOR | BPF_K:
	case BPF_ALU64 | BPF_XOR | BPF_X:
		emit_a32_alu_op(BPF_XOR, is64, dst, src, imm, code, ctx);
		break;
	case BPF_ALU | BPF_MUL | BPF_K:
	case BPF_ALU | BPF_MUL | BPF_X:
		emit_a32_mul_r(dst_lo, src_lo, ctx);
		emit_a32_mov_i(dst_hi, 0, ctx);
		break;
	case BPF_ALU64 | BPF_MUL | BPF_K:
	case BPF_ALU64 | BPF_MUL | BPF_X:
		emit_a32_mul_r64(dst, src, ctx);
		break;
	/* dst = dst / src(imm), dst = dst % src(imm) */
	case BPF_ALU | BPF_DIV | BPF_K:
	case BPF_ALU | BPF_DIV | BPF_X:
	case BPF_ALU | BPF_MOD | BPF_K:
	case BPF_ALU | BPF_MOD | BPF_X:
		/* the helper returns 0 for x / 0 and x for x % 0 */
		emit_udivmod(dst_lo, dst_lo, src_lo, ctx, BPF_OP(code), off);
		emit_a32_mov_i(dst_hi, 0, ctx);
		break;
	case BPF_ALU64 | BPF_DIV | BPF_K:
	case BPF_ALU64 | BPF_DIV | BPF_X:
	case BPF_ALU64 | BPF_MOD | BPF_K:
	case BPF_ALU64 | BPF_MOD | BPF_X:
		emit_udivmod64(dst, dst, src, ctx, BPF_OP(code), off);
		break;
	/* dst = dst << imm, dst = dst >> imm */
	case BPF_ALU | BPF_LSH | BPF_K:
	case BPF_ALU | BPF_RSH | BPF_K:
	case BPF_ALU | BPF_ARSH | BPF_K:
		if (unlikely(imm > 31))
			return -EINVAL;
		if (imm)
			emit_a32_alu_i(dst_lo, imm, ctx, BPF_OP(code));
		emit_a32_mov_i(dst_hi, 0, ctx);
		break;
	case BPF_ALU | BPF_LSH | BPF_X:
	case BPF_ALU | BPF_RSH | BPF_X:
	case BPF_ALU | BPF_ARSH | BPF_X:
		emit_a32_and_i(tmp, src_lo, 31, ctx);
		emit_a32_alu_r(dst_lo, tmp, ctx, BPF_OP(code));
		emit_a32_mov_i(dst_hi, 0, ctx);
		break;
	case BPF_ALU64 | BPF_LSH | BPF_K:
		if (unlikely(imm > 63))
			return -EINVAL;
		emit_a32_lsh_i64(dst, imm, ctx);
		break;
	case BPF_ALU64 | BPF_RSH | BPF_K:
		if (unlikely(imm > 63))
			return -EINVAL;
		emit_a32_rsh_i64(dst, imm, ctx);
		break;
	case BPF_ALU64 | BPF_ARSH | BPF_K:
		if (unlikely(imm > 63))
			return -EINVAL;
		emit_a32_arsh_i64(dst, imm, ctx);
		break;
	case BPF_ALU64 | BPF_LSH | BPF_X:
		emit_a32_lsh_r64(dst, src, ctx);
		break;
	case BPF_ALU64 | BPF_RSH | BPF_X:
		emit_a32_rsh_r64(dst, src, ctx);
		break;
	case BPF_ALU64 | BPF_ARSH | BPF_X:
		emit_a32_arsh_r64(dst, src, ctx);
		break;
	/* dst = -dst */
	case BPF_ALU | BPF_NEG:
		emit_a32_alu_i(dst_lo, 0, ctx, BPF_NEG);
		emit_a32_mov_i(dst_hi, 0, ctx);
		break;
	case BPF_ALU64 | BPF_NEG:
		emit_a32_neg64(dst, ctx);
		break;
	/* dst = htole(dst), dst = htobe(dst), bswap */
	case BPF_ALU | BPF_END | BPF_FROM_LE:
	case BPF_ALU | BPF_END | BPF_FROM_BE:
	case BPF_ALU64 | BPF_END | BPF_FROM_LE:
		if (BPF_SRC(code) == BPF_FROM_LE && BPF_CLASS(code) == BPF_ALU) {
			/* little endian host: only truncate */
			if (imm == 16)
				emit(ARM_UXTH(rd_lo, rd_lo), ctx);
			if (imm != 64)
				emit_a32_mov_i(rd_hi, 0, ctx);
			break;
		}
		switch (imm) {
		case 16:
			emit_rev16(rd_lo, rd_lo, ctx);
			emit_a32_mov_i(rd_hi, 0, ctx);
			break;
		case 32:
			emit_rev32(rd_lo, rd_lo, ctx);
			emit_a32_mov_i(rd_hi, 0, ctx);
			break;
		case 64:
			emit_rev32(ARM_LR, rd_hi, ctx);
			emit_rev32(rd_hi, rd_lo, ctx);
			emit(ARM_MOV_R(rd_lo, ARM_LR), ctx);
			break;
		default:
			return -EINVAL;
		}
		break;
	/* BPF_LD_IMM64: dst = imm64 */
	case BPF_LD | BPF_IMM | BPF_DW:
		imm64 = (u64)(insn + 1)->imm << 32 | (u32)insn->imm;
		emit_a32_mov_i64(dst, imm64, ctx);
		return 1;
	/* LDX: dst = *(size *)(src + off) */
	case BPF_LDX | BPF_MEM | BPF_W:
	case BPF_LDX | BPF_MEM | BPF_H:
	case BPF_LDX | BPF_MEM | BPF_B:
	case BPF_LDX | BPF_MEM | BPF_DW:
		emit_ldx_r(dst, src_lo, off, ctx, BPF_SIZE(code));
		break;
	/* LDXS: sign extending loads */
	case BPF_LDX | BPF_MEMSX | BPF_W:
	case BPF_LDX | BPF_MEMSX | BPF_H:
	case BPF_LDX | BPF_MEMSX | BPF_B:
		emit_ldsx_r(dst, src_lo, off, ctx, BPF_SIZE(code));
		break;
	/* ST: *(size *)(dst + off) = imm */
	case BPF_ST | BPF_MEM | BPF_W:
	case BPF_ST | BPF_MEM | BPF_H:
	case BPF_ST | BPF_MEM | BPF_B:
	case BPF_ST | BPF_MEM | BPF_DW:
		switch (BPF_SIZE(code)) {
		case BPF_DW:
			/* sign extend the immediate into the high word */
			emit_a32_mov_se_i64(true, tmp2, imm, ctx);
			break;
		default:
			emit_a32_mov_i(tmp2[1], imm, ctx);
			break;
		}
		emit_str_r(dst_lo, tmp2, off, ctx, BPF_SIZE(code));
		break;
	/* STX: *(size *)(dst + off) = src */
	case BPF_STX | BPF_MEM | BPF_W:
	case BPF_STX | BPF_MEM | BPF_H:
	case BPF_STX | BPF_MEM | BPF_B:
	case BPF_STX | BPF_MEM | BPF_DW:
		emit_str_r(dst_lo, src, off, ctx, BPF_SIZE(code));
		break;
	/* PC += off if dst OP src/imm */
	case BPF_JMP | BPF_JEQ | BPF_X:
	case BPF_JMP | BPF_JGT | BPF_X:
	case BPF_JMP | BPF_JGE | BPF_X:
	case BPF_JMP | BPF_JNE | BPF_X:
	case BPF_JMP | BPF_JSGT | BPF_X:
	case BPF_JMP | BPF_JSGE | BPF_X:
	case BPF_JMP | BPF_JSET | BPF_X:
	case BPF_JMP | BPF_JLE | BPF_X:
	case BPF_JMP | BPF_JLT | BPF_X:
	case BPF_JMP | BPF_JSLT | BPF_X:
	case BPF_JMP | BPF_JSLE | BPF_X:
	case BPF_JMP32 | BPF_JEQ | BPF_X:
	case BPF_JMP32 | BPF_JGT | BPF_X:
	case BPF_JMP32 | BPF_JGE | BPF_X:
	case BPF_JMP32 | BPF_JNE | BPF_X:
	case BPF_JMP32 | BPF_JSGT | BPF_X:
	case BPF_JMP32 | BPF_JSGE | BPF_X:
	case BPF_JMP32 | BPF_JSET | BPF_X:
	case BPF_JMP32 | BPF_JLE | BPF_X:
	case BPF_JMP32 | BPF_JLT | BPF_X:
	case BPF_JMP32 | BPF_JSLT | BPF_X:
	case BPF_JMP32 | BPF_JSLE | BPF_X:
		/* load the source operand into a register pair */
		src = arm_bpf_get_reg64(src, tmp2, ctx);
		goto go_jmp;
	case BPF_JMP | BPF_JEQ | BPF_K:
	case BPF_JMP | BPF_JGT | BPF_K:
	case BPF_JMP | BPF_JGE | BPF_K:
	case BPF_JMP | BPF_JNE | BPF_K:
	case BPF_JMP | BPF_JSGT | BPF_K:
	case BPF_JMP | BPF_JSGE | BPF_K:
	case BPF_JMP | BPF_JSET | BPF_K:
	case BPF_JMP | BPF_JLT | BPF_K:
	case BPF_JMP | BPF_JLE | BPF_K:
	case BPF_JMP | BPF_JSLT | BPF_K:
	case BPF_JMP | BPF_JSLE | BPF_K:
	case BPF_JMP32 | BPF_JEQ | BPF_K:
	case BPF_JMP32 | BPF_JGT | BPF_K:
	case BPF_JMP32 | BPF_JGE | BPF_K:
	case BPF_JMP32 | BPF_JNE | BPF_K:
	case BPF_JMP32 | BPF_JSGT | BPF_K:
	case BPF_JMP32 | BPF_JSGE | BPF_K:
	case BPF_JMP32 | BPF_JSET | BPF_K:
	case BPF_JMP32 | BPF_JLT | BPF_K:
	case BPF_JMP32 | BPF_JLE | BPF_K:
	case BPF_JMP32 | BPF_JSLT | BPF_K:
	case BPF_JMP32 | BPF_JSLE | BPF_K:
		if (off == 0)
			break;
		/* the immediate is sign extended to 64 bits */
		emit_a32_mov_se_i64(true, tmp2, imm, ctx);
go_jmp:
		/* compare the high words only for 64-bit jumps */
		emit_ar_r(dst[0], dst[1], src[0], src[1], ctx, BPF_OP(code),
			  BPF_CLASS(code) == BPF_JMP);
		jmp_off = jmp_offset(ctx, off);
		switch (BPF_OP(code)) {
		case BPF_JNE:
		case BPF_JSET:
			_emit(ARM_COND_NE, ARM_B(jmp_off), ctx);
			break;
		case BPF_JEQ:
			_emit(ARM_COND_EQ, ARM_B(jmp_off), ctx);
			break;
		case BPF_JGT:
			_emit(ARM_COND_HI, ARM_B(jmp_off), ctx);
			break;
		case BPF_JGE:
			_emit(ARM_COND_CS, ARM_B(jmp_off), ctx);
			break;
		case BPF_JSGT:
			_emit(ARM_COND_LT, ARM_B(jmp_off), ctx);
			break;
		case BPF_JSGE:
			_emit(ARM_COND_GE, ARM_B(jmp_off), ctx);
			break;
		case BPF_JLE:
			_emit(ARM_COND_LS, ARM_B(jmp_off), ctx);
			break;
		case BPF_JLT:
			_emit(ARM_COND_CC, ARM_B(jmp_off), ctx);
			break;
		case BPF_JSLT:
			_emit(ARM_COND_LT, ARM_B(jmp_off), ctx);
			break;
		case BPF_JSLE:
			_emit(ARM_COND_GE, ARM_B(jmp_off), ctx);
			break;
		}
		break;
	/* JMP OFF */
	case BPF_JMP | BPF_JA:
		if (off == 0)
			break;
		jmp_off = jmp_offset(ctx, off);
		emit(ARM_B(jmp_off), ctx);
		break;
	/* function call */
	case BPF_JMP | BPF_CALL:
		if (insn->src_reg == BPF_PSEUDO_CALL)
			return -EOPNOTSUPP;
		/* r1 to r5 are passed in r0 to r3 and on the stack */
		emit_a32_mov_r64(true, r0, r1, ctx);
		emit_a32_mov_r64(true, r1, r2, ctx);
		emit_push_r64(r5, ctx);
		emit_push_r64(r4, ctx);
		emit_push_r64(r3, ctx);
		emit_a32_mov_i(tmp[1], (u32)__bpf_call_base + imm, ctx);
		emit_blx_r(tmp[1], ctx);
		emit(ARM_ADD_I(ARM_SP, ARM_SP, imm8m(24)), ctx);
		break;
	/* function return */
	case BPF_JMP | BPF_EXIT:
		/* jump to the epilogue unless this is the last instruction */
		if (ctx->idx + 1 != ctx->prog->len) {
			jmp_off = epilogue_offset(ctx);
			emit(ARM_B(jmp_off), ctx);
		}
		break;
	default:
		pr_err_once("unknown opcode %02x\n", code);
		return -EINVAL;
	}
	return 0;
}

/* The verifier has already rejected reads of registers that were never written. */
static int check_reg_read(const struct bpf_verifier_env *env, u32 regno)
{
	if (!env->regs[regno].live_written)
		return -EACCES; /* R%d !read_ok */
	return 0;
}
