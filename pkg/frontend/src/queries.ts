/** The bundled retrieval queries, mirrored from the service sample data. */

export interface SampleQuery {
  id: string;
  text: string;
  textEn: string;
}

export const SAMPLE_QUERIES: SampleQuery[] = [
  { id: "1", text: "2型糖尿病并发糖尿病肾病", textEn: "Type 2 Diabetes Mellitus with Diabetic Nephropathy" },
  { id: "2", text: "慢性阻塞性肺疾病急性加重期伴呼吸衰竭", textEn: "Chronic Obstructive Pulmonary Disease with Acute Exacerbation and Respiratory Failure" },
  { id: "3", text: "高血压伴左心室增厚", textEn: "Hypertension with Left Ventricular Hypertrophy" },
  { id: "4", text: "肺癌伴脑继发性恶性肿瘤", textEn: "Lung Cancer with Brain Metastasis" },
  { id: "5", text: "结直肠癌术后出现肝脏继发恶性肿瘤", textEn: "Colorectal Cancer Postoperative with Liver Metastasis" },
  { id: "6", text: "系统性红斑狼疮伴狼疮性肾炎", textEn: "Systemic Lupus Erythematosus with Lupus Nephritis" },
  { id: "7", text: "慢性乙型病毒性肝炎及肝硬化并发食管胃底静脉曲张", textEn: "Chronic Hepatitis B and Cirrhosis with Esophageal and Gastric Varices" },
  { id: "8", text: "胰腺炎合并高脂血症", textEn: "Pancreatitis with Hyperlipidemia" },
  { id: "9", text: "脑梗死后合并肺部感染", textEn: "Post-Stroke with Pneumonia" },
  { id: "10", text: "帕金森病合并老年痴呆", textEn: "Parkinson's Disease with Dementia" },
  { id: "11", text: "冠状动脉粥样硬化性心脏病伴心房颤动", textEn: "Coronary Artery Disease with Atrial Fibrillation" },
  { id: "12", text: "妊娠期高血压并发HELLP综合征", textEn: "Gestational Hypertension with HELLP Syndrome" },
  { id: "13", text: "急性心肌梗死行经皮腔内冠状动脉成形术（PTCA）", textEn: "Acute Myocardial Infarction with Percutaneous Transluminal Coronary Angioplasty (PTCA)" },
  { id: "14", text: "消化道出血并发失代偿性休克", textEn: "Gastrointestinal Bleeding with Decompensated Shock" },
  { id: "15", text: "甲状腺乳头状癌行甲状腺根治术", textEn: "Papillary Thyroid Carcinoma with Thyroidectomy" },
  { id: "16", text: "乳腺恶性肿瘤术后化学治疗", textEn: "Postoperative Chemotherapy for Breast Cancer" },
  { id: "17", text: "重症肺炎伴呼吸衰竭", textEn: "Severe Pneumonia with Respiratory Failure" },
  { id: "18", text: "髋骨骨折手术后并发下肢静脉血栓形成", textEn: "Postoperative Hip Fracture with Deep Vein Thrombosis" },
  { id: "19", text: "急性髓系白血病并发肺曲霉菌感染", textEn: "Acute Myeloid Leukemia with Pulmonary Aspergillosis" },
  { id: "20", text: "输尿管结石伴有积水和感染", textEn: "Ureteral Calculi with Hydronephrosis and Infection" },
];
