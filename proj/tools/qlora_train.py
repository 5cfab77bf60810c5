#!/usr/bin/env python3
"""External trainer for `trainer.kind = "command"`.

Reads the trainer_config.json written by the pipeline, fine-tunes a 4-bit
quantised base model with LoRA adapters and writes train_log.jsonl and
artifact.json into output_dir. Needs torch, transformers, peft and
bitsandbytes on a CUDA machine.

Loss: alpha * mean CE over the label value tokens
      + beta * (1/N) * sum of CE over each sample's explanation tokens.
Instruction tokens never contribute.
"""
import argparse
import json
import os
import sys


def target_spans(target):
    """Character spans (label, rationale) inside a serialised target."""
    key = '"hate_speech":"'
    start = target.index(key) + len(key)
    end = target.index('"', start)
    expl = target.index('"explanations":')
    return (start, end), (expl, len(target))


def token_roles(offsets, prompt_chars, target):
    """0 = ignored, 1 = label token, 2 = rationale token."""
    (ls, le), (rs, re_) = target_spans(target)
    roles = []
    for a, b in offsets:
        a -= prompt_chars
        b -= prompt_chars
        if b <= 0 or a >= len(target):
            roles.append(0)
        elif a < le and b > ls:
            roles.append(1)
        elif a >= rs and b <= re_ + 1:
            roles.append(2)
        else:
            roles.append(0)
    return roles


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", required=True)
    cfg = json.load(open(ap.parse_args().config))

    import torch
    from peft import LoraConfig, get_peft_model, prepare_model_for_kbit_training
    from transformers import AutoModelForCausalLM, AutoTokenizer, BitsAndBytesConfig

    out_dir = cfg["output_dir"]
    base = cfg["base_model"] or os.environ.get("DISTIL_BASE_MODEL")
    if not base:
        sys.exit("no base_model in trainer config")
    bits = cfg["quantization_bits"]
    quant = None
    if bits == 4:
        quant = BitsAndBytesConfig(load_in_4bit=True, bnb_4bit_quant_type="nf4",
                                   bnb_4bit_compute_dtype=torch.bfloat16)
    elif bits == 8:
        quant = BitsAndBytesConfig(load_in_8bit=True)

    tok = AutoTokenizer.from_pretrained(base)
    model = AutoModelForCausalLM.from_pretrained(base, quantization_config=quant, device_map="auto")
    if quant is not None:
        model = prepare_model_for_kbit_training(model)
    model = get_peft_model(model, LoraConfig(r=cfg["lora"]["r"], lora_alpha=cfg["lora"]["alpha"],
                                             task_type="CAUSAL_LM", target_modules="all-linear"))

    examples = []
    with open(cfg["training_file"]) as f:
        for line in f:
            row = json.loads(line)
            prompt = tok.apply_chat_template([{"role": "user", "content": row["instruction"]}],
                                             tokenize=False, add_generation_prompt=True)
            enc = tok(prompt + row["target"], return_offsets_mapping=True, add_special_tokens=False,
                      truncation=True, max_length=cfg["max_seq_length"])
            roles = token_roles(enc["offset_mapping"], len(prompt), row["target"])
            examples.append((torch.tensor(enc["input_ids"]), torch.tensor(roles)))
    if not examples:
        sys.exit("empty training file")

    alpha, beta = cfg["loss_weights"]["alpha"], cfg["loss_weights"]["beta"]
    opt = torch.optim.AdamW([p for p in model.parameters() if p.requires_grad], lr=cfg["learning_rate"])
    batch_size = int(cfg.get("device", {}).get("batch_size", 4))
    log = open(os.path.join(out_dir, "train_log.jsonl"), "w")
    model.train()
    step, cursor = 0, 0
    while step < cfg["max_steps"]:
        batch = [examples[(cursor + i) % len(examples)] for i in range(batch_size)]
        cursor += batch_size
        label_terms, rationale_sum = [], 0.0
        for ids, roles in batch:
            ids = ids.to(model.device)
            roles = roles.to(model.device)
            logits = model(input_ids=ids[None]).logits[0, :-1]
            ce = torch.nn.functional.cross_entropy(logits.float(), ids[1:], reduction="none")
            r = roles[1:]
            if (r == 1).any():
                label_terms.append(ce[r == 1].mean())
            rationale_sum = rationale_sum + ce[r == 2].sum()
        label_loss = torch.stack(label_terms).mean() if label_terms else torch.zeros((), device=model.device)
        loss = alpha * label_loss + beta * rationale_sum / len(batch)
        opt.zero_grad()
        loss.backward()
        opt.step()
        log.write(json.dumps({"step": step, "loss": float(loss)}) + "\n")
        log.flush()
        step += 1

    adapter_dir = os.path.join(out_dir, "adapter")
    model.save_pretrained(adapter_dir)
    json.dump({"artifact_ref": f"lora:{base}@{adapter_dir}"}, open(os.path.join(out_dir, "artifact.json"), "w"))


if __name__ == "__main__":
    main()
