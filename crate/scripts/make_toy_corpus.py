#!/usr/bin/env python3
"""Regenerate data/toy/{train,dev}.conll.

Sentences are filled from fixed templates with a seeded RNG, so the output
is stable. Columns: word, POS, chunk, NE label (IOB2).
"""
import random
from pathlib import Path

PER = [
    ["Nguyễn_Văn_An"], ["Trần_Thị_Bình"], ["Lê_Minh_Châu"], ["Phạm_Quốc_Dũng"],
    ["Hoàng_Thu_Hà"], ["Đặng_Văn_Khoa"], ["Bùi_Thị_Lan"], ["Vũ_Đức_Minh"],
]
LOC = [
    ["Hà_Nội"], ["Đà_Nẵng"], ["Huế"], ["Cần_Thơ"], ["Hải_Phòng"],
    ["thành_phố", "Hồ_Chí_Minh"], ["Quảng_Ninh"], ["Nha_Trang"],
]
ORG = [
    ["Bộ", "Y_tế"], ["Công_ty", "Bình_Minh"], ["Trường", "Đại_học", "Bách_khoa"],
    ["Ngân_hàng", "Nhà_nước"], ["Uỷ_ban", "nhân_dân"], ["Hội", "Chữ_thập", "đỏ"],
]
MISC = [["SEA_Games"], ["World_Cup"], ["Việt"], ["Anh"], ["Tết"]]
LANG = [["Việt"], ["Anh"], ["Pháp"], ["Nhật"]]


def ent(kind, words):
    """Tokens for one entity: (word, POS, chunk, label)."""
    out = []
    for i, w in enumerate(words):
        pos = "Np" if w[0].isupper() else "N"
        chunk = "B-NP" if i == 0 else "I-NP"
        label = ("B-" if i == 0 else "I-") + kind
        out.append((w, pos, chunk, label))
    return out


def o(word, pos, chunk):
    return [(word, pos, chunk, "O")]


def t1(r):
    return ent("PER", r.choice(PER)) + o("đến", "V", "B-VP") + ent("LOC", r.choice(LOC)) + \
        o("vào", "E", "B-PP") + o("hôm_qua", "N", "B-NP") + o(".", "CH", "O")


def t2(r):
    return o("Ông", "Nc", "B-NP") + ent("PER", r.choice(PER)) + o("làm_việc", "V", "B-VP") + \
        o("tại", "E", "B-PP") + ent("ORG", r.choice(ORG)) + o(".", "CH", "O")


def t3(r):
    return ent("ORG", r.choice(ORG)) + o("vừa", "R", "O") + o("tổ_chức", "V", "B-VP") + \
        o("hội_nghị", "N", "B-NP") + o("ở", "E", "B-PP") + ent("LOC", r.choice(LOC)) + o(".", "CH", "O")


def t4(r):
    return o("Đội_tuyển", "N", "B-NP") + ent("LOC", r.choice(LOC)) + o("giành", "V", "B-VP") + \
        o("huy_chương", "N", "B-NP") + o("vàng", "A", "I-NP") + o("tại", "E", "B-PP") + \
        ent("MISC", r.choice(MISC[:2])) + o(".", "CH", "O")


def t5(r):
    return o("Bà", "Nc", "B-NP") + ent("PER", r.choice(PER)) + o("nói", "V", "B-VP") + \
        o("tiếng", "N", "B-NP") + ent("MISC", r.choice(LANG)) + o("rất", "R", "O") + \
        o("giỏi", "A", "B-AP") + o(".", "CH", "O")


def t6(r):
    return o("Hôm_nay", "N", "B-NP") + o(",", "CH", "O") + o("trời", "N", "B-NP") + \
        ent("LOC", r.choice(LOC)) + o("mưa", "V", "B-VP") + o("to", "A", "B-AP") + o(".", "CH", "O")


def t7(r):
    a, b = r.sample(PER, 2)
    return ent("PER", a) + o("và", "Cc", "O") + ent("PER", b) + o("gặp", "V", "B-VP") + \
        o("nhau", "N", "B-NP") + o("ở", "E", "B-PP") + ent("LOC", r.choice(LOC)) + o(".", "CH", "O")


def t8(r):
    return o("Người", "N", "B-NP") + o("dân", "N", "I-NP") + o("về", "V", "B-VP") + \
        o("quê", "N", "B-NP") + o("ăn", "V", "B-VP") + ent("MISC", [MISC[4][0]]) + \
        o("cùng", "E", "B-PP") + o("gia_đình", "N", "B-NP") + o(".", "CH", "O")


def t9(r):
    return o("Nhiều", "A", "B-NP") + o("người", "N", "I-NP") + o("đã", "R", "O") + \
        o("đi", "V", "B-VP") + o("làm", "V", "B-VP") + o("sớm", "A", "B-AP") + o(".", "CH", "O")


def t10(r):
    return o("Theo", "E", "B-PP") + ent("ORG", r.choice(ORG)) + o(",", "CH", "O") + \
        ent("PER", r.choice(PER)) + o("sẽ", "R", "O") + o("sang", "V", "B-VP") + \
        ent("LOC", r.choice(LOC)) + o("tuần", "N", "B-NP") + o("sau", "A", "I-NP") + o(".", "CH", "O")


TEMPLATES = [t1, t2, t3, t4, t5, t6, t7, t8, t9, t10]


def write(path, sentences):
    with open(path, "w", encoding="utf-8") as f:
        for s in sentences:
            for tok in s:
                f.write(" ".join(tok) + "\n")
            f.write("\n")


def main():
    r = random.Random(2017)
    root = Path(__file__).resolve().parent.parent / "data" / "toy"
    root.mkdir(parents=True, exist_ok=True)
    train = [TEMPLATES[i % len(TEMPLATES)](r) for i in range(50)]
    dev = [TEMPLATES[r.randrange(len(TEMPLATES))](r) for _ in range(15)]
    write(root / "train.conll", train)
    write(root / "dev.conll", dev)


if __name__ == "__main__":
    main()
