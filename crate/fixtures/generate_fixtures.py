#!/usr/bin/env python3
"""Regenerate the fixture set under fixtures/.

Writes:
  pages/*.html            encyclopedia-style lab test pages (122 valid + 2 skip cases)
  golden/corpus.jsonl     expected corpus produced by `labrag ingest --from-fixtures`
  datasets/labs.jsonl     ground-truth factors and range questions

The expected section text is built from the same table as the HTML, not by
parsing the HTML, so the golden corpus is an independent check of the parser.

Usage: python3 fixtures/generate_fixtures.py
"""

import hashlib
import html
import itertools
import json
import os
import re

ROOT = os.path.dirname(os.path.abspath(__file__))
SOURCE_TAG = "medlineplus-snapshot-20240901"
BOILERPLATE = "Normal value ranges may vary slightly among different laboratories."

FACTOR_ORDER = ["Age", "Sex", "Pregnancy status", "Menstrual cycle phase", "Specimen type"]

# name, section text (paragraph list), truth substring
# Paragraph entries are strings; the truth must appear verbatim in the text.
FACTORLESS = [
    ("Aldolase blood test",
     ["Normal results range between 1.0 to 7.5 units per liter (0.02 to 0.13 microkat/L). There is a slight difference between men and women."],
     "1.0 to 7.5 units per liter (0.02 to 0.13 microkat/L)"),
    ("Acid-fast stain",
     ["A normal result means no acid-fast bacteria were found on the stained sample."],
     "A normal result means no acid-fast bacteria were found on the stained sample"),
    ("Anti-smooth muscle antibody",
     ["Normally, there are no antibodies present."],
     "Normally, there are no antibodies present"),
    ("Ammonia blood test", ["The normal range is 15 to 45 µ/dL (11 to 32 µmol/L)."], "15 to 45 µ/dL (11 to 32 µmol/L)"),
    ("BUN - blood test", ["The normal result is 6 to 20 mg/dL (2.14 to 7.14 mmol/L)."], "6 to 20 mg/dL (2.14 to 7.14 mmol/L)"),
    ("Acid loading test (pH)", ["A urine pH of less than 5.3 is normal after the acid load."], "less than 5.3"),
    ("Albumin - blood (serum)", ["The normal range is 3.4 to 5.4 g/dL (34 to 54 g/L)."], "3.4 to 5.4 g/dL (34 to 54 g/L)"),
    ("ALT blood test", ["Normal values are 4 to 36 U/L."], "4 to 36 U/L"),
    ("AST blood test", ["The normal range is 8 to 33 U/L."], "8 to 33 U/L"),
    ("Amylase - blood", ["The normal range is 40 to 140 U/L (0.38 to 1.42 microkat/L)."], "40 to 140 U/L (0.38 to 1.42 microkat/L)"),
    ("Lipase test", ["Normal values are 0 to 160 U/L (0 to 2.67 microkat/L)."], "0 to 160 U/L (0 to 2.67 microkat/L)"),
    ("Bilirubin blood test", ["Total bilirubin is normally 0.1 to 1.2 mg/dL (1.71 to 20.5 µmol/L)."], "0.1 to 1.2 mg/dL (1.71 to 20.5 µmol/L)"),
    ("Calcium - blood", ["Normal values range from 8.5 to 10.2 mg/dL (2.13 to 2.55 millimol/L)."], "8.5 to 10.2 mg/dL (2.13 to 2.55 millimol/L)"),
    ("Chloride test - blood", ["The normal range is 96 to 106 milliequivalents per liter (mEq/L) or 96 to 106 millimoles per liter (millimol/L)."], "96 to 106 milliequivalents per liter (mEq/L)"),
    ("CO2 blood test", ["The normal range is 23 to 29 milliequivalents per liter (mEq/L)."], "23 to 29 milliequivalents per liter (mEq/L)"),
    ("Potassium test", ["The normal range is 3.5 to 5.0 milliequivalents per liter (mEq/L)."], "3.5 to 5.0 milliequivalents per liter (mEq/L)"),
    ("Sodium blood test", ["The normal range for blood sodium levels is 135 to 145 milliequivalents per liter (mEq/L)."], "135 to 145 milliequivalents per liter (mEq/L)"),
    ("Magnesium blood test", ["The normal range for blood magnesium level is 1.7 to 2.2 mg/dL (0.85 to 1.10 mmol/L)."], "1.7 to 2.2 mg/dL (0.85 to 1.10 mmol/L)"),
    ("Phosphorus blood test", ["Normal values for adults are 2.8 to 4.5 mg/dL (0.87 to 1.45 mmol/L)."], "2.8 to 4.5 mg/dL (0.87 to 1.45 mmol/L)"),
    ("Lactic acid test", ["Normal results range from 4.5 to 19.8 mg/dL (0.5 to 2.2 mmol/L)."], "4.5 to 19.8 mg/dL (0.5 to 2.2 mmol/L)"),
    ("Lactate dehydrogenase test", ["The normal value range is 105 to 333 international units per liter (IU/L)."], "105 to 333 international units per liter (IU/L)"),
    ("TSH test", ["Normal values are from 0.5 to 5.0 mIU/L."], "0.5 to 5.0 mIU/L"),
    ("T3 test", ["The normal range is 60 to 180 nanograms per deciliter (ng/dL), or 0.9 to 2.8 nanomoles per liter (nmol/L)."], "60 to 180 nanograms per deciliter (ng/dL)"),
    ("Free T4 test", ["The normal range for free T4 is 0.9 to 2.3 nanograms per deciliter (ng/dL), or 12 to 30 picomoles per liter (pmol/L)."], "0.9 to 2.3 nanograms per deciliter (ng/dL)"),
    ("Total iron binding capacity", ["The normal range is 240 to 450 mcg/dL (43 to 81 micromol/L)."], "240 to 450 mcg/dL (43 to 81 micromol/L)"),
    ("Transferrin blood test", ["The normal range is 200 to 360 milligrams per deciliter (mg/dL)."], "200 to 360 milligrams per deciliter (mg/dL)"),
    ("Vitamin B12 level", ["Normal values are 160 to 950 picograms per milliliter (pg/mL) or 118 to 701 picomoles per liter (pmol/L)."], "160 to 950 picograms per milliliter (pg/mL)"),
    ("Folic acid - blood test", ["The normal range is 2.7 to 17.0 nanograms per milliliter (ng/mL) or 6.12 to 38.52 nanomoles per liter (nmol/L)."], "2.7 to 17.0 nanograms per milliliter (ng/mL)"),
    ("Prothrombin time (PT)", ["PT is measured in seconds. Most of the time, results are given as 11 to 13.5 seconds."], "11 to 13.5 seconds"),
    ("Partial thromboplastin time (PTT)", ["Values are typically 25 to 35 seconds."], "25 to 35 seconds"),
    ("Fibrinogen blood test", ["The normal range is 200 to 400 mg/dL (2.0 to 4.0 g/L)."], "200 to 400 mg/dL (2.0 to 4.0 g/L)"),
    ("Bleeding time", ["Bleeding normally stops within 1 to 9 minutes."], "1 to 9 minutes"),
    ("Platelet count", ["The normal number of platelets in the blood is 150,000 to 400,000 platelets per microliter (mcL) or 150 to 400 × 10^9/L."], "150,000 to 400,000 platelets per microliter (mcL)"),
    ("WBC count", ["The normal number of WBCs in the blood is 4,500 to 11,000 WBCs per microliter (4.5 to 11.0 × 10^9/L)."], "4,500 to 11,000 WBCs per microliter"),
    ("Reticulocyte count", ["Normal results for healthy adults are between 0.5% and 2.5%."], "between 0.5% and 2.5%"),
    ("Ceruloplasmin blood test", ["The normal range for adults is 14 to 40 mg/dL (0.93 to 2.65 µmol/L)."], "14 to 40 mg/dL (0.93 to 2.65 µmol/L)"),
    ("Copper - blood test", ["The normal range is 85 to 180 micrograms per deciliter (mcg/dL)."], "85 to 180 micrograms per deciliter (mcg/dL)"),
    ("Osmolality blood test", ["Normal values range from 275 to 295 mOsm/kg (275 to 295 mmol/kg)."], "275 to 295 mOsm/kg (275 to 295 mmol/kg)"),
    ("Cholinesterase - blood", ["Pseudocholinesterase values are normally between 8 and 18 units per milliliter (U/mL) or 8 to 18 kU/L."], "between 8 and 18 units per milliliter (U/mL)"),
    ("C-reactive protein", ["Normal CRP values vary from lab to lab. Generally, there is no or a low level of detectable CRP in the blood, often less than 1.0 mg/dL (10 mg/L)."], "less than 1.0 mg/dL (10 mg/L)"),
    ("Haptoglobin blood test", ["Normal results range from 45 to 200 mg/dL (450 to 2000 mg/L)."], "45 to 200 mg/dL (450 to 2000 mg/L)"),
    ("Gastrin blood test", ["Normal values are less than 100 pg/mL (48.1 pmol/L)."], "less than 100 pg/mL (48.1 pmol/L)"),
    ("Glucagon blood test", ["The normal range is 50 to 100 pg/mL (14 to 28 pmol/L)."], "50 to 100 pg/mL (14 to 28 pmol/L)"),
    ("Parathyroid hormone (PTH) blood test", ["Normal values are 10 to 55 picograms per milliliter (pg/mL)."], "10 to 55 picograms per milliliter (pg/mL)"),
    ("25-hydroxy vitamin D test", ["The normal range is 20 to 40 nanograms per milliliter (ng/mL) or 50 to 100 nanomoles per liter (nmol/L)."], "20 to 40 nanograms per milliliter (ng/mL)"),
    ("Total protein", ["The normal range is 6.0 to 8.3 grams per deciliter (g/dL) or 60 to 83 g/L."], "6.0 to 8.3 grams per deciliter (g/dL)"),
    ("Urine specific gravity test", ["Normal values for urine specific gravity are 1.005 to 1.030."], "1.005 to 1.030"),
    ("CSF glucose test", ["The glucose level in the spinal fluid should be 50 to 80 mg/100 mL (or greater than 2/3 of blood sugar level)."], "50 to 80 mg/100 mL"),
    ("CSF total protein", ["The normal protein range varies from lab to lab, but is typically about 15 to 60 milligrams per deciliter (mg/dL) or 0.15 to 0.6 mg/mL."], "15 to 60 milligrams per deciliter (mg/dL)"),
    ("CSF cell count", ["The normal white blood cell count is between 0 and 5 cells per microliter."], "between 0 and 5 cells per microliter"),
    ("Myoglobin blood test", ["The normal range is 25 to 72 ng/mL (1.28 to 3.67 nmol/L)."], "25 to 72 ng/mL (1.28 to 3.67 nmol/L)"),
    ("Troponin test", ["Cardiac troponin levels are normally so low they cannot be detected with most blood tests, typically 0 to 0.04 ng/mL."], "0 to 0.04 ng/mL"),
    ("Homocysteine", ["Normal value is 4 to 14 µmol/L."], "4 to 14 µmol/L"),
    ("Ionized calcium", ["The normal range is 4.64 to 5.28 mg/dL (1.16 to 1.32 mmol/L)."], "4.64 to 5.28 mg/dL (1.16 to 1.32 mmol/L)"),
    ("Angiotensin-converting enzyme test", ["Normal values vary based on the test method, typically 8 to 53 U/L."], "8 to 53 U/L"),
    ("Anion gap blood test", ["Normal results are 4 to 12 mEq/L."], "4 to 12 mEq/L"),
    ("Protein urine test", ["The normal value for a 24-hour urine collection is less than 150 mg per day."], "less than 150 mg per day"),
    ("Potassium urine test", ["In adults, urinary potassium is generally 25 to 125 mEq per day."], "25 to 125 mEq per day"),
    ("Microalbuminuria test", ["Normal values are less than 30 mg of albumin in a 24-hour urine collection."], "less than 30 mg of albumin"),
    ("Triglyceride level", ["Results are normal when less than 150 mg/dL (1.7 mmol/L)."], "less than 150 mg/dL (1.7 mmol/L)"),
    ("Lipoprotein-a", ["Normal values are less than 30 mg/dL (75 nmol/L)."], "less than 30 mg/dL (75 nmol/L)"),
    ("Quantitative nephelometry", ["IgG: 650 to 1600 mg/dL (6.5 to 16.0 g/L)."], "650 to 1600 mg/dL (6.5 to 16.0 g/L)"),
    ("Antithrombin III blood test", ["The normal value is 80% to 120% of the control."], "80% to 120% of the control"),
    ("Factor V assay", ["Normal value is 50% to 200% of the laboratory control or reference value."], "50% to 200% of the laboratory control"),
    ("Factor VIII assay", ["Normal value is 50% to 200% of the laboratory reference or control value."], "50% to 200% of the laboratory reference"),
    ("Plasminogen blood test", ["The normal range is 80% to 120% of normal plasma activity."], "80% to 120% of normal plasma activity"),
    ("Protein C blood test", ["Normal values are 70% to 130% of the amount in normal plasma."], "70% to 130% of the amount in normal plasma"),
    ("Protein S blood test", ["Normal values are 60% to 150% inhibition."], "60% to 150% inhibition"),
    ("Urine 24-hour volume", ["The normal range for 24-hour urine volume is 800 to 2,000 milliliters per day (with a normal fluid intake of about 2 liters per day)."], "800 to 2,000 milliliters per day"),
    ("5'-nucleotidase", ["The normal value is 2 to 17 units per liter (U/L)."], "2 to 17 units per liter (U/L)"),
    ("Leucine aminopeptidase - urine", ["The normal range is 2 to 18 units per 24 hours."], "2 to 18 units per 24 hours"),
    ("Sweat chloride test", ["A sweat chloride result of less than or equal to 29 mmol/L means cystic fibrosis is unlikely."], "less than or equal to 29 mmol/L"),
    ("Fecal fat", ["Normal values are less than 7 grams of fat per 24 hours."], "less than 7 grams of fat per 24 hours"),
    ("Hemoglobin A1C test", ["For a person without diabetes, the normal range for the A1C level is below 5.7%."], "below 5.7%"),
    ("Alpha-1 antitrypsin blood test", ["The normal range is 100 to 200 milligrams per deciliter (mg/dL)."], "100 to 200 milligrams per deciliter (mg/dL)"),
    ("Beta-carotene test", ["Normal values are 50 to 200 micrograms per deciliter (µg/dL) or 0.9 to 3.7 micromoles per liter (µmol/L)."], "50 to 200 micrograms per deciliter (µg/dL)"),
    ("Vitamin A test", ["The normal values for vitamin A range from 20 to 60 micrograms per deciliter (mcg/dL) or 0.69 to 2.09 micromoles per liter (micromol/L)."], "20 to 60 micrograms per deciliter (mcg/dL)"),
    ("Erythropoietin test", ["The normal range is 2.6 to 18.5 milliunits per milliliter (mU/mL)."], "2.6 to 18.5 milliunits per milliliter (mU/mL)"),
    ("Prealbumin blood test", ["Normal values range from 15 to 36 milligrams per deciliter (mg/dL) or 150 to 360 milligrams per liter (mg/L)."], "15 to 36 milligrams per deciliter (mg/dL)"),
    ("Methylmalonic acid blood test", ["The normal value is 0.07 to 0.27 micromoles per liter (µmol/L)."], "0.07 to 0.27 micromoles per liter (µmol/L)"),
    ("G6PD test", ["Normal values vary and are typically 5.5 to 20.5 units per gram of hemoglobin (U/g Hb)."], "5.5 to 20.5 units per gram of hemoglobin (U/g Hb)"),
    ("Cold agglutinins", ["Normal results are antibody titers less than 1:16."], "antibody titers less than 1:16"),
]

MALE, FEMALE = "Male", "Female"
SEX_WORD = {MALE: "Men", FEMALE: "Women"}


def age_label(age):
    return f"{age} years old" if not age.endswith("years") else f"{age} old"


def sex_labs():
    rows = [
        ("Red blood cell (RBC) count", "4.7 to 6.1 million cells/mcL", "4.2 to 5.4 million cells/mcL"),
        ("Hemoglobin test", "13.8 to 17.2 grams per deciliter (g/dL)", "12.1 to 15.1 g/dL"),
        ("Hematocrit test", "40.7% to 50.3%", "36.1% to 44.3%"),
        ("Creatinine blood test", "0.7 to 1.3 mg/dL (61.9 to 114.9 µmol/L)", "0.6 to 1.1 mg/dL (53 to 97.2 µmol/L)"),
        ("Creatinine urine test", "955 to 2,936 mg per 24 hours", "601 to 1,689 mg per 24 hours"),
        ("Creatinine clearance test", "97 to 137 mL/min (1.65 to 2.33 mL/s)", "88 to 128 mL/min (1.5 to 2.18 mL/s)"),
        ("Ferritin blood test", "24 to 336 micrograms per liter (mcg/L)", "11 to 307 mcg/L"),
        ("Uric acid - blood", "4.0 to 8.5 mg/dL (0.24 to 0.51 mmol/L)", "2.7 to 7.3 mg/dL (0.16 to 0.43 mmol/L)"),
        ("Prolactin blood test", "less than 20 ng/mL (425 µg/L)", "less than 25 ng/mL (25 µg/L)"),
        ("Urine 17-ketosteroids", "7 to 20 mg per 24 hours", "5 to 15 mg per 24 hours"),
        ("Sex hormone binding globulin", "10 to 57 nanomoles per liter (nmol/L)", "18 to 144 nmol/L"),
        ("Urine 17-hydroxycorticosteroids", "3 to 10 mg per 24 hours", "2 to 8 mg per 24 hours"),
        ("Androstenedione blood test", "40 to 150 ng/dL (1.4 to 5.2 nmol/L)", "30 to 200 ng/dL (1.0 to 7.0 nmol/L)"),
        ("Gamma-glutamyl transferase (GGT) blood test", "8 to 61 units per liter (U/L)", "5 to 36 U/L"),
        ("Serum iron test", "65 to 176 micrograms per deciliter (µg/dL)", "50 to 170 µg/dL"),
    ]
    labs = []
    for name, male, female in rows:
        labs.append({
            "name": name,
            "intro": ["Normal ranges differ between men and women:"],
            "factors": ["Sex"],
            "items": [("Men", male), ("Women", female)],
            "answer": lambda v, m=male, f=female: m if v["Sex"] == MALE else f,
            "domains": {"Sex": [MALE, FEMALE]},
        })
    return labs


def age_labs():
    rows = [
        ("Prostate-specific antigen (PSA) blood test", "50", "less than 2.5 ng/mL", "less than 4.0 ng/mL"),
        ("17-OH progesterone", "18", "less than 110 ng/dL (3.3 nmol/L)", "less than 200 ng/dL (6.0 nmol/L)"),
        ("ALP - blood test", "18", "100 to 390 U/L", "44 to 147 IU/L (0.73 to 2.45 microkat/L)"),
        ("Insulin-like growth factor-1 (IGF-1) test", "40", "182 to 780 ng/mL", "90 to 360 ng/mL"),
        ("Natriuretic peptide tests (BNP, NT-proBNP)", "75", "NT-proBNP less than 125 pg/mL", "NT-proBNP less than 450 pg/mL"),
    ]
    labs = []
    for name, cut, young, old in rows:
        under, over = f"under {cut}", f"over {cut}"
        labs.append({
            "name": name,
            "intro": ["The normal range depends on age:"],
            "factors": ["Age"],
            "items": [(f"People {age_label(under)}", young), (f"People {age_label(over)}", old)],
            "answer": lambda v, u=under, y=young, o=old: y if v["Age"] == u else o,
            "domains": {"Age": [under, over]},
        })
    return labs


def two_value_labs():
    rows = [
        ("Aldosterone blood test", "Body position", ["Standing", "Lying down"],
         "Normal ranges depend on whether you were standing or lying down when the blood was drawn:",
         ["Standing: 7 to 30 ng/dL (0.19 to 0.83 nmol/L)", "Lying down: 3 to 16 ng/dL (0.08 to 0.44 nmol/L)"],
         ["7 to 30 ng/dL (0.19 to 0.83 nmol/L)", "3 to 16 ng/dL (0.08 to 0.44 nmol/L)"]),
        ("Carcinoembryonic antigen (CEA) blood test", "Smoking status", ["Nonsmoker", "Smoker"],
         "The normal range differs for smokers:",
         ["Nonsmokers: less than 2.5 ng/mL (2.5 µg/L)", "Smokers: less than 5.0 ng/mL (5.0 µg/L)"],
         ["less than 2.5 ng/mL (2.5 µg/L)", "less than 5.0 ng/mL (5.0 µg/L)"]),
        ("Cortisol blood test", "Time of day", ["8 a.m.", "4 p.m."],
         "Normal values depend on the time of day the blood is drawn:",
         ["Blood drawn at 8 a.m.: 5 to 25 mcg/dL (138 to 690 nmol/L)", "Blood drawn at 4 p.m.: 3 to 16 mcg/dL (83 to 441 nmol/L)"],
         ["5 to 25 mcg/dL (138 to 690 nmol/L)", "3 to 16 mcg/dL (83 to 441 nmol/L)"]),
        ("Creatine phosphokinase test", "Athlete status", ["Non-athlete", "Athlete"],
         "Total CPK normal values:",
         ["Most people: 10 to 120 micrograms per liter (mcg/L)", "Trained athletes: up to 400 mcg/L"],
         ["10 to 120 micrograms per liter (mcg/L)", "up to 400 mcg/L"]),
        ("Renin blood test", "Salt intake", ["Low-sodium diet", "Normal-sodium diet"],
         "The normal range depends on the amount of salt in your diet:",
         ["Low-sodium diet: 2.9 to 24 ng/mL/hour", "Normal-sodium diet: 0.6 to 4.3 ng/mL/hour"],
         ["2.9 to 24 ng/mL/hour", "0.6 to 4.3 ng/mL/hour"]),
        ("Thyroxine-binding globulin", "Pregnancy status", ["Not pregnant", "Pregnant"],
         "Normal values differ during pregnancy:",
         ["Women who are not pregnant and men: 13 to 39 micrograms per milliliter (µg/mL)", "Pregnant women: 30 to 56 µg/mL"],
         ["13 to 39 micrograms per milliliter (µg/mL)", "30 to 56 µg/mL"]),
        ("Sodium urine test", "Specimen type", ["Random urine sample", "24-hour urine sample"],
         "Normal values depend on how the urine is collected:",
         ["Random urine sample: 20 mEq/L or more", "24-hour urine sample: 40 to 220 mEq per day"],
         ["20 mEq/L or more", "40 to 220 mEq per day"]),
    ]
    labs = []
    for name, factor, values, intro, items, answers in rows:
        table = dict(zip(values, answers))
        labs.append({
            "name": name,
            "intro": [intro],
            "factors": [factor],
            "items": [tuple(i.split(": ", 1)) for i in items],
            "answer": lambda v, f=factor, t=table: t[v[f]],
            "domains": {factor: values},
        })
    labs.append({
        "name": "Urine concentration test",
        "intro": ["After no fluid intake for 12 to 14 hours, the normal values are:"],
        "factors": ["Water consumption"],
        "items": [("Specific gravity", "1.005 to 1.030"), ("Osmolality", "more than 850 mOsm/kg water")],
        "answer": lambda v: "more than 850 mOsm/kg water",
        "domains": {"Water consumption": ["No fluid intake for 12 to 14 hours"]},
    })
    return labs


def sex_age_lab(name, ages, male, female, intro="Normal values by age and sex:"):
    items = []
    table = {}
    for sex, ranges in ((MALE, male), (FEMALE, female)):
        for age, rng in zip(ages, ranges):
            items.append((f"{SEX_WORD[sex]} {age_label(age)}", rng))
            table[(age, sex)] = rng
    return {
        "name": name,
        "intro": [intro],
        "factors": ["Age", "Sex"],
        "items": items,
        "answer": lambda v, t=table: t[(v["Age"], v["Sex"])],
        "domains": {"Age": list(ages), "Sex": [MALE, FEMALE]},
    }


def multi_factor_labs():
    labs = [
        sex_age_lab("Erythrocyte sedimentation rate (ESR)", ["under 50", "over 50"],
                    ["less than 15 mm/hr", "less than 20 mm/hr"],
                    ["less than 20 mm/hr", "less than 30 mm/hr"],
                    intro="Westergren method:"),
        sex_age_lab("DHEA-sulfate test", ["18 to 29 years", "30 to 49 years", "over 50"],
                    ["280 to 640 µg/dL", "120 to 520 µg/dL", "20 to 410 µg/dL"],
                    ["65 to 380 µg/dL", "45 to 270 µg/dL", "15 to 200 µg/dL"]),
        sex_age_lab("Estradiol blood test", ["under 18", "18 to 50 years", "over 50"],
                    ["less than 20 pg/mL", "10 to 50 pg/mL", "10 to 40 pg/mL"],
                    ["less than 80 pg/mL", "30 to 400 pg/mL", "0 to 30 pg/mL"]),
        sex_age_lab("Testosterone", ["under 18", "18 to 69 years", "over 70"],
                    ["7 to 800 ng/dL", "300 to 1,000 ng/dL", "90 to 890 ng/dL"],
                    ["7 to 40 ng/dL", "15 to 70 ng/dL", "5 to 32 ng/dL"]),
        sex_age_lab("Growth hormone test", ["under 18", "18 to 64 years", "over 65"],
                    ["0 to 10 ng/mL", "0.4 to 10 ng/mL", "0 to 5 ng/mL"],
                    ["0 to 10 ng/mL (0 to 440 pmol/L)", "1 to 14 ng/mL", "0 to 7 ng/mL"]),
        sex_age_lab("Cystatin C blood test", ["under 18", "18 to 59 years", "over 60"],
                    ["0.62 to 1.11 mg/L", "0.56 to 0.98 mg/L", "0.71 to 1.35 mg/L"],
                    ["0.58 to 1.07 mg/L", "0.52 to 0.90 mg/L", "0.66 to 1.26 mg/L"]),
        sex_age_lab("Osteocalcin blood test", ["under 18", "18 to 29 years", "30 to 49 years", "over 50"],
                    ["20 to 180 ng/mL", "24 to 70 ng/mL", "14 to 42 ng/mL", "11 to 34 ng/mL"],
                    ["18 to 160 ng/mL", "11 to 48 ng/mL", "8 to 32 ng/mL", "9 to 38 ng/mL"]),
        sex_age_lab("Bone-specific alkaline phosphatase", ["under 18", "18 to 29 years", "30 to 49 years", "over 50"],
                    ["20 to 150 µg/L", "8.4 to 29.3 µg/L", "6.5 to 20.1 µg/L", "5.8 to 21.6 µg/L"],
                    ["18 to 140 µg/L", "4.7 to 17.8 µg/L", "4.5 to 16.9 µg/L", "5.7 to 32.9 µg/L"]),
    ]

    # AFP: age matters only outside pregnancy.
    afp_ages = ["under 18", "18 to 40 years", "over 40"]
    afp_nonpreg = ["less than 15 ng/mL", "less than 8.5 ng/mL", "less than 10 ng/mL"]
    afp_preg = {"Second trimester": "10 to 150 ng/mL", "Third trimester": "100 to 400 ng/mL"}
    afp_items = [(f"Not pregnant, {age_label(a)}", r) for a, r in zip(afp_ages, afp_nonpreg)]
    afp_items += [(f"Pregnant, {k.lower()}", v) for k, v in afp_preg.items()]
    afp_age_table = dict(zip(afp_ages, afp_nonpreg))
    labs.append({
        "name": "Alpha fetoprotein (AFP) blood test",
        "intro": ["Normal values by age and pregnancy status:"],
        "factors": ["Age", "Pregnancy status"],
        "items": afp_items,
        "answer": lambda v: afp_age_table[v["Age"]] if v["Pregnancy status"] == "Not pregnant" else afp_preg[v["Pregnancy status"]],
        "domains": {"Age": afp_ages, "Pregnancy status": ["Not pregnant", "Second trimester", "Third trimester"]},
    })

    hcg_preg = {"Not pregnant": "less than 5 mIU/mL", "First trimester": "5 to 150,000 mIU/mL", "Second trimester": "3,000 to 100,000 mIU/mL"}
    labs.append({
        "name": "HCG blood test - quantitative",
        "intro": ["Normal results by sex and pregnancy status:"],
        "factors": ["Sex", "Pregnancy status"],
        "items": [("Men", "less than 2 mIU/mL")] + [(f"Women, {k.lower()}", v) for k, v in hcg_preg.items()],
        "answer": lambda v: "less than 2 mIU/mL" if v["Sex"] == MALE else hcg_preg[v["Pregnancy status"]],
        "domains": {"Sex": [MALE, FEMALE], "Pregnancy status": list(hcg_preg)},
    })

    lh_phase = {"Follicular phase": "5 to 25 IU/L", "Mid-cycle peak": "25 to 57 IU/L"}
    labs.append({
        "name": "Luteinizing hormone (LH) blood test",
        "intro": ["Normal blood values for adults:"],
        "factors": ["Age", "Sex", "Menstrual cycle phase"],
        "items": [("Men over 18 years old", "1.8 to 8.6 IU/L")] + [(f"Women over 18 years old, {k.lower()}", v) for k, v in lh_phase.items()],
        "answer": lambda v: "1.8 to 8.6 IU/L" if v["Sex"] == MALE else lh_phase[v["Menstrual cycle phase"]],
        "domains": {"Age": ["over 18"], "Sex": [MALE, FEMALE], "Menstrual cycle phase": list(lh_phase)},
    })

    prog_phase = {"Follicular phase": "less than 1 ng/mL (3.18 nmol/L)", "Luteal phase": "5 to 20 ng/mL (15.9 to 63.6 nmol/L)", "Postmenopausal": "less than 1 ng/mL (3.18 nmol/L) after menopause"}
    labs.append({
        "name": "Serum progesterone",
        "intro": ["Normal results for people who are not pregnant:"],
        "factors": ["Sex", "Pregnancy status", "Menstrual cycle phase"],
        "items": [("Men", "0.13 to 0.97 ng/mL (0.4 to 3.1 nmol/L)")] + [(f"Women, {k.lower()}", v) for k, v in prog_phase.items()],
        "answer": lambda v: "0.13 to 0.97 ng/mL (0.4 to 3.1 nmol/L)" if v["Sex"] == MALE else prog_phase[v["Menstrual cycle phase"]],
        "domains": {"Sex": [MALE, FEMALE], "Pregnancy status": ["Not pregnant"], "Menstrual cycle phase": list(prog_phase)},
    })
    return labs


def doc_id(name):
    return hashlib.sha256(name.lower().encode("utf-8")).hexdigest()[:16]


def canonical_order(factors):
    def key(f):
        return (FACTOR_ORDER.index(f), f) if f in FACTOR_ORDER else (len(FACTOR_ORDER), f)
    return sorted(factors, key=key)


def question_text(name, values, factors):
    if not factors:
        return f"What is the normal range of {name}?"
    given = ", ".join(f"{f}: {values[f]}" for f in factors)
    return f"What is the normal range of {name} given {given}?"


AGE_RE = re.compile(r"\b(\d+ to \d+ years|(?:over|under) \d+)\b", re.IGNORECASE)


def mined_ages(text):
    seen = []
    for m in AGE_RE.finditer(text):
        v = m.group(1).lower()
        if v not in seen:
            seen.append(v)
    return seen


def esc(s):
    return html.escape(s, quote=False).replace("µ", "&micro;").replace("×", "&times;")


def page_html(name, url, body_html):
    return f"""<!DOCTYPE html>
<html lang="en">
<head>
  <meta charset="utf-8">
  <title>{esc(name)}: MedlinePlus Medical Encyclopedia</title>
  <link rel="canonical" href="{url}">
  <script>window.dataLayer = window.dataLayer || [];</script>
</head>
<body>
  <header><nav><a href="/">Home</a> | <a href="/ency/">Medical Encyclopedia</a></nav></header>
  <article>
    <div class="page-title"><h1>{esc(name)}</h1></div>
    <div id="ency_summary"><p>This test measures a substance found in the <a href="/ency/article/blood.htm">blood</a> or urine.</p></div>
    <section>
      <div class="section"><div class="section-header"><h2>How the Test is Performed</h2></div>
      <div class="section-body"><p>A sample is collected and sent to a lab.</p></div></div>
    </section>
{body_html}
    <section>
      <div class="section"><div class="section-header"><h2>What Abnormal Results Mean</h2></div>
      <div class="section-body"><p>Higher or lower than normal levels may be due to:</p>
      <ul><li>Liver or kidney disease</li><li>Certain <b>medicines</b></li></ul></div></div>
    </section>
    <section>
      <div class="section"><div class="section-header"><h2>References</h2></div>
      <div class="section-body"><p>Chernecky CC, Berger BJ. Laboratory Tests and Diagnostic Procedures.</p></div></div>
    </section>
  </article>
  <footer><p>U.S. National Library of Medicine</p></footer>
</body>
</html>
"""


def normal_results_html(paragraphs, items, trailer):
    parts = []
    for i, p in enumerate(paragraphs):
        # Vary inline markup and line wrapping so the parser has something to flatten.
        words = esc(p).split(" ")
        if i == 0 and len(words) > 3:
            words[1] = f"<b>{words[1]}</b>"
        wrapped = "\n        ".join(" ".join(words[j:j + 8]) for j in range(0, len(words), 8))
        parts.append(f"      <p>\n        {wrapped}\n      </p>")
    if items:
        lis = "\n".join(f"        <li><strong>{esc(label)}:</strong> {esc(rng)}</li>" for label, rng in items)
        parts.append(f"      <ul>\n{lis}\n      </ul>")
    for t in trailer:
        parts.append(f"      <p>{esc(t)}</p>")
    inner = "\n".join(parts)
    return f"""    <section>
      <div class="section"><div class="section-header"><h2>Normal Results</h2></div>
      <div class="section-body">
{inner}
      </div></div>
    </section>"""


def expected_text(paragraphs, items, trailer):
    segs = [" ".join(p.split()) for p in paragraphs]
    if items:
        segs.append("; ".join(f"{label}: {rng}" for label, rng in items))
    segs += trailer
    return " ".join(segs)


def slugify(name):
    return re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")


def main():
    factored = sex_labs() + age_labs() + two_value_labs() + multi_factor_labs()
    assert len(FACTORLESS) == 82, len(FACTORLESS)
    assert len(factored) == 40, len(factored)

    pages_dir = os.path.join(ROOT, "pages")
    os.makedirs(pages_dir, exist_ok=True)
    for f in os.listdir(pages_dir):
        os.remove(os.path.join(pages_dir, f))
    os.makedirs(os.path.join(ROOT, "golden"), exist_ok=True)
    os.makedirs(os.path.join(ROOT, "datasets"), exist_ok=True)

    docs = []
    records = []
    article = 3000

    def emit(name, paragraphs, items, factors, questions, trailer):
        nonlocal article
        article += 7
        url = f"https://medlineplus.gov/ency/article/{article:06d}.htm"
        text = expected_text(paragraphs, items, trailer)
        for q in questions:
            assert q["true_answer"] in text, (name, q["true_answer"])
        body = normal_results_html(paragraphs, items, trailer)
        with open(os.path.join(pages_dir, slugify(name) + ".html"), "w", encoding="utf-8") as fh:
            fh.write(page_html(name, url, body))
        docs.append({"doc_id": doc_id(name), "lab_name": name, "normal_results": text, "url": url})
        records.append({"lab_name": name, "factors": factors, "questions": questions, "url": url})
        return text

    for idx, (name, paragraphs, truth) in enumerate(FACTORLESS):
        trailer = [BOILERPLATE] if idx % 3 != 2 else []
        q = {"factor_values": {}, "question_text": question_text(name, {}, []), "true_answer": truth}
        emit(name, paragraphs, [], [], [q], trailer)

    for lab in factored:
        factors = canonical_order(lab["factors"])
        domains = [lab["domains"][f] for f in factors]
        questions = []
        for combo in itertools.product(*domains):
            values = dict(zip(factors, combo))
            questions.append({
                "factor_values": values,
                "question_text": question_text(lab["name"], values, factors),
                "true_answer": lab["answer"](values),
            })
        text = emit(lab["name"], lab["intro"], lab["items"], factors, questions, [BOILERPLATE])
        if "Age" in factors:
            mined = mined_ages(text)
            want = lab["domains"]["Age"]
            if len(want) >= 2:
                assert mined == want, (lab["name"], mined, want)

    # Pages the ingester must skip.
    with open(os.path.join(pages_dir, "x-ray-no-normal-results.html"), "w", encoding="utf-8") as fh:
        body = """    <section>
      <div class="section"><div class="section-header"><h2>Outlook (Prognosis)</h2></div>
      <div class="section-body"><p>Most people recover fully.</p></div></div>
    </section>"""
        fh.write(page_html("Chest x-ray", "https://medlineplus.gov/ency/article/003804.htm", body))
    with open(os.path.join(pages_dir, "zz-empty-normal-results.html"), "w", encoding="utf-8") as fh:
        body = """    <section>
      <div class="section"><div class="section-header"><h2>Normal Results</h2></div>
      <div class="section-body">
        <p>   </p>
      </div></div>
    </section>"""
        fh.write(page_html("Placeholder lab", "https://medlineplus.gov/ency/article/009999.htm", body))

    docs.sort(key=lambda d: d["doc_id"])
    ids = [d["doc_id"] for d in docs]
    assert len(set(ids)) == len(ids)

    def dumps(obj):
        return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))

    with open(os.path.join(ROOT, "golden", "corpus.jsonl"), "w", encoding="utf-8") as fh:
        fh.write(dumps({"format": "labrag-corpus", "version": 1, "source_tag": SOURCE_TAG}) + "\n")
        for d in docs:
            fh.write(dumps(d) + "\n")

    with open(os.path.join(ROOT, "datasets", "labs.jsonl"), "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(dumps(r) + "\n")

    nq = sum(len(r["questions"]) for r in records)
    print(f"labs={len(records)} questions={nq} docs={len(docs)}")


if __name__ == "__main__":
    main()
