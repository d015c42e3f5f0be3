"""Regenerates the synthetic demo reports, SOC map and negative-control list."""
import csv
import random

N_REPORTS = 3000
rng = random.Random(20200316)

# AE -> (control rate, target rate)
AES = {
    "Headache": (0.20, 0.28), "Pyrexia": (0.08, 0.30), "Fatigue": (0.15, 0.22), "Nausea": (0.10, 0.12),
    "Injection site pain": (0.10, 0.35), "Myalgia": (0.06, 0.20), "Chills": (0.05, 0.22), "Dizziness": (0.08, 0.09),
    "Arthralgia": (0.06, 0.07), "Rash": (0.05, 0.06), "Urticaria": (0.03, 0.04), "Dyspnoea": (0.04, 0.05),
    "Syncope": (0.03, 0.03), "Lymphadenopathy": (0.01, 0.08), "Pain in extremity": (0.06, 0.08), "Cough": (0.05, 0.05),
    "Paraesthesia": (0.03, 0.04), "Vomiting": (0.04, 0.04), "Diarrhoea": (0.05, 0.05), "Back pain": (0.04, 0.04),
    "Abdominal pain": (0.03, 0.03), "Pruritus": (0.04, 0.05),
}
SOC = {
    "General disorders": ["Pyrexia", "Fatigue", "Chills", "Injection site pain"],
    "Nervous system": ["Headache", "Dizziness", "Syncope", "Paraesthesia"],
    "Gastrointestinal": ["Nausea", "Vomiting", "Diarrhoea", "Abdominal pain"],
    "Musculoskeletal": ["Myalgia", "Arthralgia", "Pain in extremity", "Back pain"],
    "Skin": ["Rash", "Urticaria", "Pruritus"],
    "Respiratory": ["Dyspnoea", "Cough"],
    "Immune and lymphatic": ["Lymphadenopathy", "Urticaria"],
}
NEGATIVE_CONTROLS = ["Cough", "Diarrhoea", "Back pain", "Abdominal pain", "Vomiting", "Syncope", "Dizziness",
                     "Arthralgia"]

rows = []
for i in range(1, N_REPORTS + 1):
    target = rng.random() < 0.5
    year = 2021 if target else rng.choice([2020, 2021])
    date = f"{year}-{rng.randint(1, 12):02d}-{rng.randint(1, 28):02d}"
    gender = rng.choice(["F", "F", "M", "M", "U"])
    age = "" if rng.random() < 0.03 else f"{rng.uniform(15, 90):.1f}"
    chosen = [a for a, (pc, pt) in AES.items() if rng.random() < (pt if target else pc)]
    if not chosen:
        chosen = [rng.choice(list(AES))]
    rows.append([f"R{i:05d}", date, "target" if target else "control", gender, age, ";".join(chosen)])

# Rows that exercise the reject and exclusion paths.
n = N_REPORTS
rows += [
    [f"R{n + 1:05d}", "2021-03-02", "mixed", "F", "44", "Headache"],
    [f"R{n + 2:05d}", "2021-03-02", "target", "F", "44", ""],
    [f"R{n + 3:05d}", "2021-13-02", "control", "M", "51", "Cough"],
    [f"R{n + 4:05d}", "2020-02-10", "target", "M", "37.0", "Headache;Pyrexia"],
]

with open("reports.csv", "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["report_id", "received_date", "vaccine_group", "gender", "age_years", "ae_list"])
    w.writerows(rows)
with open("soc_map.csv", "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["ae_name", "soc_name"])
    for soc, members in SOC.items():
        for ae in members:
            w.writerow([ae, soc])
with open("nc_list.txt", "w") as f:
    f.write("# Terms treated as unrelated to either vaccine in the demo\n")
    f.writelines(ae + "\n" for ae in NEGATIVE_CONTROLS)
